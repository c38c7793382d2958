#include "nh/ag/ops.hpp"

#include <algorithm>
#include <cmath>

#include "nh/ag/kl.hpp"
#include "nh/core/error.hpp"

namespace nh::ag {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

void check_same(const Var& a, const Var& b, const char* op) {
    require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
            std::string(op) + ": shape " + a.shape().str() + " vs " + b.shape().str());
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Elementwise unary op from value and derivative-from-(x, y) functors.
template <typename F, typename D>
Var unary(const Var& x, F f, D dfdx) {
    Eigen::ArrayXf y = f(x.value());
    return make_op(x.shape(), std::move(y), {x}, [dfdx](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        p.grad_buffer() += self.grad * dfdx(p.value, self.value);
    });
}

struct ConvGeom {
    int n, c, h, w, o, kh, kw, ho, wo;
    ConvSpec s;
    Eigen::Index k() const { return Eigen::Index(c) * kh * kw; }
    Eigen::Index p() const { return Eigen::Index(n) * ho * wo; }
};

void im2col(const float* x, const ConvGeom& g, float* col) {
    const Eigen::Index P = g.p();
    for (int ci = 0; ci < g.c; ++ci) {
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                float* row = col + ((Eigen::Index(ci) * g.kh + i) * g.kw + j) * P;
                for (int ni = 0; ni < g.n; ++ni) {
                    const float* xp = x + (Eigen::Index(ni) * g.c + ci) * g.h * g.w;
                    float* out = row + Eigen::Index(ni) * g.ho * g.wo;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.s.stride_h - g.s.pad_h + i;
                        float* orow = out + Eigen::Index(oy) * g.wo;
                        if (iy < 0 || iy >= g.h) {
                            std::fill(orow, orow + g.wo, 0.0f);
                            continue;
                        }
                        const float* xrow = xp + Eigen::Index(iy) * g.w;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            const int ix = ox * g.s.stride_w - g.s.pad_w + j;
                            orow[ox] = (ix < 0 || ix >= g.w) ? 0.0f : xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

void col2im(const float* col, const ConvGeom& g, float* dx) {
    const Eigen::Index P = g.p();
    for (int ci = 0; ci < g.c; ++ci) {
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                const float* row = col + ((Eigen::Index(ci) * g.kh + i) * g.kw + j) * P;
                for (int ni = 0; ni < g.n; ++ni) {
                    float* xp = dx + (Eigen::Index(ni) * g.c + ci) * g.h * g.w;
                    const float* in = row + Eigen::Index(ni) * g.ho * g.wo;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.s.stride_h - g.s.pad_h + i;
                        if (iy < 0 || iy >= g.h) continue;
                        const float* irow = in + Eigen::Index(oy) * g.wo;
                        float* xrow = xp + Eigen::Index(iy) * g.w;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            const int ix = ox * g.s.stride_w - g.s.pad_w + j;
                            if (ix >= 0 && ix < g.w) xrow[ix] += irow[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvSpec spec) {
    const Shape xs = x.shape(), ws = weight.shape();
    require(xs.c == ws.c, ErrorCode::ShapeMismatch,
            "conv2d: input channels " + std::to_string(xs.c) + " vs weight " + ws.str());
    ConvGeom g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, 0, 0, spec};
    g.ho = (xs.h + 2 * spec.pad_h - ws.h) / spec.stride_h + 1;
    g.wo = (xs.w + 2 * spec.pad_w - ws.w) / spec.stride_w + 1;
    require(g.ho > 0 && g.wo > 0, ErrorCode::ShapeMismatch,
            "conv2d: kernel larger than padded input " + xs.str());
    if (bias) require(bias.size() == g.o, ErrorCode::ShapeMismatch, "conv2d: bias size");

    const Eigen::Index K = g.k(), P = g.p(), HW = Eigen::Index(g.ho) * g.wo;
    auto col = std::make_shared<RowMat>(K, P);
    im2col(x.value().data(), g, col->data());
    CMapRow W(weight.value().data(), g.o, K);
    RowMat out2(g.o, P);
    out2.noalias() = W * (*col);

    Eigen::ArrayXf y(Eigen::Index(g.n) * g.o * HW);
    for (int ni = 0; ni < g.n; ++ni) {
        for (int oi = 0; oi < g.o; ++oi) {
            const float b = bias ? bias.value()[oi] : 0.0f;
            Eigen::Map<Eigen::ArrayXf>(y.data() + (Eigen::Index(ni) * g.o + oi) * HW, HW) =
                out2.row(oi).segment(Eigen::Index(ni) * HW, HW).array().transpose() + b;
        }
    }
    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_op(Shape{g.n, g.o, g.ho, g.wo}, std::move(y), std::move(parents),
                   [g, col, has_bias = static_cast<bool>(bias)](Node& self) {
                       const Eigen::Index K = g.k(), P = g.p(), HW = Eigen::Index(g.ho) * g.wo;
                       RowMat g2(g.o, P);
                       for (int ni = 0; ni < g.n; ++ni) {
                           for (int oi = 0; oi < g.o; ++oi) {
                               g2.row(oi).segment(Eigen::Index(ni) * HW, HW) =
                                   Eigen::Map<const Eigen::RowVectorXf>(
                                       self.grad.data() + (Eigen::Index(ni) * g.o + oi) * HW, HW);
                           }
                       }
                       Node& xn = *self.parents[0];
                       Node& wn = *self.parents[1];
                       if (wn.requires_grad) {
                           MapRow dW(wn.grad_buffer().data(), g.o, K);
                           dW.noalias() += g2 * col->transpose();
                       }
                       if (has_bias && self.parents[2]->requires_grad) {
                           self.parents[2]->grad_buffer() += g2.rowwise().sum().array();
                       }
                       if (xn.requires_grad) {
                           CMapRow W(wn.value.data(), g.o, K);
                           RowMat dcol(K, P);
                           dcol.noalias() = W.transpose() * g2;
                           col2im(dcol.data(), g, xn.grad_buffer().data());
                       }
                   });
}

Var avg_pool(const Var& x, int ph, int pw) {
    const Shape s = x.shape();
    require(s.h % ph == 0 && s.w % pw == 0, ErrorCode::ShapeMismatch,
            "avg_pool: " + s.str() + " not divisible by pool " + std::to_string(ph) + "x" +
                std::to_string(pw));
    const Shape o{s.n, s.c, s.h / ph, s.w / pw};
    Eigen::ArrayXf y = Eigen::ArrayXf::Zero(o.size());
    const float inv = 1.0f / float(ph * pw);
    const auto& xv = x.value();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        for (int yy = 0; yy < s.h; ++yy) {
            for (int xx = 0; xx < s.w; ++xx) {
                y[(Eigen::Index(nc) * o.h + yy / ph) * o.w + xx / pw] +=
                    xv[(Eigen::Index(nc) * s.h + yy) * s.w + xx] * inv;
            }
        }
    }
    return make_op(o, std::move(y), {x}, [s, o, ph, pw, inv](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int nc = 0; nc < s.n * s.c; ++nc) {
            for (int yy = 0; yy < s.h; ++yy) {
                for (int xx = 0; xx < s.w; ++xx) {
                    g[(Eigen::Index(nc) * s.h + yy) * s.w + xx] +=
                        self.grad[(Eigen::Index(nc) * o.h + yy / ph) * o.w + xx / pw] * inv;
                }
            }
        }
    });
}

Var upsample(const Var& x, int fh, int fw) {
    const Shape s = x.shape();
    const Shape o{s.n, s.c, s.h * fh, s.w * fw};
    Eigen::ArrayXf y(o.size());
    const auto& xv = x.value();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
        for (int yy = 0; yy < o.h; ++yy) {
            for (int xx = 0; xx < o.w; ++xx) {
                y[(Eigen::Index(nc) * o.h + yy) * o.w + xx] =
                    xv[(Eigen::Index(nc) * s.h + yy / fh) * s.w + xx / fw];
            }
        }
    }
    return make_op(o, std::move(y), {x}, [s, o, fh, fw](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int nc = 0; nc < s.n * s.c; ++nc) {
            for (int yy = 0; yy < o.h; ++yy) {
                for (int xx = 0; xx < o.w; ++xx) {
                    g[(Eigen::Index(nc) * s.h + yy / fh) * s.w + xx / fw] +=
                        self.grad[(Eigen::Index(nc) * o.h + yy) * o.w + xx];
                }
            }
        }
    });
}

Var relu(const Var& x) {
    return unary(
        x, [](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return v.max(0.0f); },
        [](const Eigen::ArrayXf& v, const Eigen::ArrayXf&) -> Eigen::ArrayXf {
            return (v > 0.0f).cast<float>();
        });
}

Var leaky_relu(const Var& x, float slope) {
    return unary(
        x, [slope](const Eigen::ArrayXf& v) -> Eigen::ArrayXf {
            return (v > 0.0f).select(v, slope * v);
        },
        [slope](const Eigen::ArrayXf& v, const Eigen::ArrayXf&) -> Eigen::ArrayXf {
            return (v > 0.0f).select(Eigen::ArrayXf::Ones(v.size()),
                                     Eigen::ArrayXf::Constant(v.size(), slope));
        });
}

Var tanh(const Var& x) {
    return unary(
        x, [](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return v.tanh(); },
        [](const Eigen::ArrayXf&, const Eigen::ArrayXf& y) -> Eigen::ArrayXf {
            return 1.0f - y.square();
        });
}

Var sigmoid(const Var& x) {
    return unary(
        x, [](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return 1.0f / (1.0f + (-v).exp()); },
        [](const Eigen::ArrayXf&, const Eigen::ArrayXf& y) -> Eigen::ArrayXf {
            return y * (1.0f - y);
        });
}

Var exp(const Var& x) {
    return unary(
        x, [](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return v.exp(); },
        [](const Eigen::ArrayXf&, const Eigen::ArrayXf& y) -> Eigen::ArrayXf { return y; });
}

Var abs(const Var& x) {
    return unary(
        x, [](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return v.abs(); },
        [](const Eigen::ArrayXf& v, const Eigen::ArrayXf&) -> Eigen::ArrayXf {
            return v.sign();
        });
}

Var square(const Var& x) {
    return unary(
        x, [](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return v.square(); },
        [](const Eigen::ArrayXf& v, const Eigen::ArrayXf&) -> Eigen::ArrayXf {
            return 2.0f * v;
        });
}

Var clamp(const Var& x, float lo, float hi) {
    return unary(
        x, [lo, hi](const Eigen::ArrayXf& v) -> Eigen::ArrayXf { return v.max(lo).min(hi); },
        [lo, hi](const Eigen::ArrayXf& v, const Eigen::ArrayXf&) -> Eigen::ArrayXf {
            return ((v >= lo) && (v <= hi)).cast<float>();
        });
}

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    return make_op(a.shape(), a.value() + b.value(), {a, b}, [](Node& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->grad_buffer() += self.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    return make_op(a.shape(), a.value() - b.value(), {a, b}, [](Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad;
        if (self.parents[1]->requires_grad) self.parents[1]->grad_buffer() -= self.grad;
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    return make_op(a.shape(), a.value() * b.value(), {a, b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) pa.grad_buffer() += self.grad * pb.value;
        if (pb.requires_grad) pb.grad_buffer() += self.grad * pa.value;
    });
}

Var scale(const Var& x, float s) {
    return make_op(x.shape(), x.value() * s, {x}, [s](Node& self) {
        Node& p = parent(self, 0);
        if (p.requires_grad) p.grad_buffer() += self.grad * s;
    });
}

Var add_scalar(const Var& x, float s) {
    return make_op(x.shape(), x.value() + s, {x}, [](Node& self) {
        Node& p = parent(self, 0);
        if (p.requires_grad) p.grad_buffer() += self.grad;
    });
}

Var softmax_channels(const Var& x) {
    const Shape s = x.shape();
    const Eigen::Index hw = s.plane();
    Eigen::ArrayXf y(s.size());
    const auto& xv = x.value();
    for (int ni = 0; ni < s.n; ++ni) {
        const Eigen::Index base = Eigen::Index(ni) * s.c * hw;
        using Block = Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic,
                                                    Eigen::RowMajor>>;
        Block in(xv.data() + base, s.c, hw);
        Eigen::Map<Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(
            y.data() + base, s.c, hw);
        const Eigen::Array<float, 1, Eigen::Dynamic> mx = in.colwise().maxCoeff();
        out = (in.rowwise() - mx).exp();
        const Eigen::Array<float, 1, Eigen::Dynamic> z = out.colwise().sum();
        out.rowwise() /= z;
    }
    return make_op(s, std::move(y), {x}, [s, hw](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        using RA = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        for (int ni = 0; ni < s.n; ++ni) {
            const Eigen::Index base = Eigen::Index(ni) * s.c * hw;
            Eigen::Map<const RA> sm(self.value.data() + base, s.c, hw);
            Eigen::Map<const RA> go(self.grad.data() + base, s.c, hw);
            Eigen::Map<RA> gi(g.data() + base, s.c, hw);
            const Eigen::Array<float, 1, Eigen::Dynamic> dot = (sm * go).colwise().sum();
            gi += sm * (go.rowwise() - dot);
        }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    require(!xs.empty(), ErrorCode::InvalidArgument, "concat of nothing");
    Shape o = xs[0].shape();
    o.c = 0;
    for (const auto& v : xs) {
        const Shape s = v.shape();
        require(s.n == o.n && s.h == o.h && s.w == o.w, ErrorCode::ShapeMismatch,
                "concat_channels: " + s.str() + " vs " + xs[0].shape().str());
        o.c += s.c;
    }
    const Eigen::Index hw = o.plane();
    Eigen::ArrayXf y(o.size());
    std::vector<int> offsets;
    int off = 0;
    for (const auto& v : xs) {
        offsets.push_back(off);
        const int c = v.shape().c;
        for (int ni = 0; ni < o.n; ++ni) {
            y.segment((Eigen::Index(ni) * o.c + off) * hw, c * hw) =
                v.value().segment(Eigen::Index(ni) * c * hw, c * hw);
        }
        off += c;
    }
    return make_op(o, std::move(y), xs, [o, hw, offsets](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            Node& p = *self.parents[i];
            if (!p.requires_grad) continue;
            const int c = p.shape.c;
            auto& g = p.grad_buffer();
            for (int ni = 0; ni < o.n; ++ni) {
                g.segment(Eigen::Index(ni) * c * hw, c * hw) +=
                    self.grad.segment((Eigen::Index(ni) * o.c + offsets[i]) * hw, c * hw);
            }
        }
    });
}

Var slice_channels(const Var& x, int begin, int count) {
    const Shape s = x.shape();
    require(begin >= 0 && count > 0 && begin + count <= s.c, ErrorCode::ShapeMismatch,
            "slice_channels out of range for " + s.str());
    const Shape o{s.n, count, s.h, s.w};
    const Eigen::Index hw = s.plane();
    Eigen::ArrayXf y(o.size());
    for (int ni = 0; ni < s.n; ++ni) {
        y.segment(Eigen::Index(ni) * count * hw, count * hw) =
            x.value().segment((Eigen::Index(ni) * s.c + begin) * hw, count * hw);
    }
    return make_op(o, std::move(y), {x}, [s, hw, begin, count](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int ni = 0; ni < s.n; ++ni) {
            g.segment((Eigen::Index(ni) * s.c + begin) * hw, count * hw) +=
                self.grad.segment(Eigen::Index(ni) * count * hw, count * hw);
        }
    });
}

Var slice_width(const Var& x, int begin, int count) {
    const Shape s = x.shape();
    require(begin >= 0 && count > 0 && begin + count <= s.w, ErrorCode::ShapeMismatch,
            "slice_width out of range for " + s.str());
    const Shape o{s.n, s.c, s.h, count};
    Eigen::ArrayXf y(o.size());
    const Eigen::Index rows = Eigen::Index(s.n) * s.c * s.h;
    for (Eigen::Index r = 0; r < rows; ++r) {
        y.segment(r * count, count) = x.value().segment(r * s.w + begin, count);
    }
    return make_op(o, std::move(y), {x}, [s, rows, begin, count](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (Eigen::Index r = 0; r < rows; ++r) {
            g.segment(r * s.w + begin, count) += self.grad.segment(r * count, count);
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    require(shape.size() == x.size(), ErrorCode::ShapeMismatch,
            "reshape " + x.shape().str() + " -> " + shape.str());
    return make_op(shape, x.value(), {x}, [](Node& self) {
        Node& p = parent(self, 0);
        if (p.requires_grad) p.grad_buffer() += self.grad;
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const Shape xs = x.shape(), ws = weight.shape();
    const int f = xs.c * xs.h * xs.w;
    require(ws.c * ws.h * ws.w == f, ErrorCode::ShapeMismatch,
            "linear: input " + xs.str() + " vs weight " + ws.str());
    const int o = ws.n;
    CMapRow X(x.value().data(), xs.n, f);
    CMapRow W(weight.value().data(), o, f);
    Eigen::ArrayXf y(Eigen::Index(xs.n) * o);
    MapRow Y(y.data(), xs.n, o);
    Y.noalias() = X * W.transpose();
    if (bias) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.value().data(), o);
    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_op(Shape{xs.n, o, 1, 1}, std::move(y), std::move(parents),
                   [n = xs.n, f, o, has_bias = static_cast<bool>(bias)](Node& self) {
                       CMapRow G(self.grad.data(), n, o);
                       Node& xn = *self.parents[0];
                       Node& wn = *self.parents[1];
                       if (wn.requires_grad) {
                           CMapRow X(xn.value.data(), n, f);
                           MapRow dW(wn.grad_buffer().data(), o, f);
                           dW.noalias() += G.transpose() * X;
                       }
                       if (has_bias && self.parents[2]->requires_grad) {
                           self.parents[2]->grad_buffer() += G.colwise().sum().transpose().array();
                       }
                       if (xn.requires_grad) {
                           CMapRow W(wn.value.data(), o, f);
                           MapRow dX(xn.grad_buffer().data(), n, f);
                           dX.noalias() += G * W;
                       }
                   });
}

Var embedding(std::span<const int> ids, int n, int t, const Var& table) {
    const Shape ts = table.shape();
    const int v = ts.n, d = ts.c * ts.h * ts.w;
    require(static_cast<int>(ids.size()) == n * t, ErrorCode::ShapeMismatch,
            "embedding: id count does not match n*t");
    std::vector<int> idv(ids.begin(), ids.end());
    for (int id : idv) {
        require(id >= 0 && id < v, ErrorCode::InvalidArgument,
                "embedding id " + std::to_string(id) + " out of range");
    }
    Eigen::ArrayXf y(Eigen::Index(n) * d * t);
    const auto& tv = table.value();
    for (int ni = 0; ni < n; ++ni) {
        for (int ti = 0; ti < t; ++ti) {
            const int id = idv[std::size_t(ni) * t + ti];
            for (int di = 0; di < d; ++di) {
                y[(Eigen::Index(ni) * d + di) * t + ti] = tv[Eigen::Index(id) * d + di];
            }
        }
    }
    return make_op(Shape{n, d, 1, t}, std::move(y), {table},
                   [idv = std::move(idv), n, t, d](Node& self) {
                       Node& p = parent(self, 0);
                       if (!p.requires_grad) return;
                       auto& g = p.grad_buffer();
                       for (int ni = 0; ni < n; ++ni) {
                           for (int ti = 0; ti < t; ++ti) {
                               const int id = idv[std::size_t(ni) * t + ti];
                               for (int di = 0; di < d; ++di) {
                                   g[Eigen::Index(id) * d + di] +=
                                       self.grad[(Eigen::Index(ni) * d + di) * t + ti];
                               }
                           }
                       }
                   });
}

Var broadcast_width(const Var& x, int t) {
    const Shape s = x.shape();
    require(s.h == 1 && s.w == 1, ErrorCode::ShapeMismatch,
            "broadcast_width expects {N,C,1,1}, got " + s.str());
    const Eigen::Index rows = Eigen::Index(s.n) * s.c;
    Eigen::ArrayXf y(rows * t);
    for (Eigen::Index r = 0; r < rows; ++r) y.segment(r * t, t).setConstant(x.value()[r]);
    return make_op(Shape{s.n, s.c, 1, t}, std::move(y), {x}, [rows, t](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (Eigen::Index r = 0; r < rows; ++r) g[r] += self.grad.segment(r * t, t).sum();
    });
}

Var mean_hw(const Var& x) {
    const Shape s = x.shape();
    const Eigen::Index hw = s.plane(), rows = Eigen::Index(s.n) * s.c;
    Eigen::ArrayXf y(rows);
    for (Eigen::Index r = 0; r < rows; ++r) y[r] = x.value().segment(r * hw, hw).mean();
    return make_op(Shape{s.n, s.c, 1, 1}, std::move(y), {x}, [rows, hw](Node& self) {
        Node& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (Eigen::Index r = 0; r < rows; ++r) g.segment(r * hw, hw) += self.grad[r] / float(hw);
    });
}

Var sum(const Var& x) {
    Eigen::ArrayXf y(1);
    y[0] = x.value().sum();
    return make_op(Shape{}, std::move(y), {x}, [](Node& self) {
        Node& p = parent(self, 0);
        if (p.requires_grad) p.grad_buffer() += self.grad[0];
    });
}

Var mean(const Var& x) {
    Eigen::ArrayXf y(1);
    y[0] = x.value().mean();
    const float inv = 1.0f / float(x.size());
    return make_op(Shape{}, std::move(y), {x}, [inv](Node& self) {
        Node& p = parent(self, 0);
        if (p.requires_grad) p.grad_buffer() += self.grad[0] * inv;
    });
}

Var l1_mean(const Var& a, const Var& b) { return mean(abs(sub(a, b))); }

Var mse_mean(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

Var reparameterize(const Var& mu, const Var& log_var, const Eigen::ArrayXf& eps) {
    check_same(mu, log_var, "reparameterize");
    require(eps.size() == mu.size(), ErrorCode::ShapeMismatch, "reparameterize: eps size");
    const Var noise = Var::constant(mu.shape(), eps);
    return add(mu, mul(exp(scale(log_var, 0.5f)), noise));
}

Var kl_standard_normal(const Var& mu, const Var& log_var) {
    check_same(mu, log_var, "kl_standard_normal");
    const Shape s = mu.shape();
    const float positions = float(Eigen::Index(s.n) * s.plane());
    Eigen::ArrayXf y(1);
    y[0] = gaussian_kl(mu.value(), log_var.value()) / positions;
    return make_op(Shape{}, std::move(y), {mu, log_var}, [positions](Node& self) {
        Node& m = parent(self, 0);
        Node& lv = parent(self, 1);
        const float g = self.grad[0] / positions;
        if (m.requires_grad) m.grad_buffer() += g * gaussian_kl_grad_mu(m.value);
        if (lv.requires_grad) lv.grad_buffer() += g * gaussian_kl_grad_log_var(lv.value);
    });
}

}  // namespace nh::ag
