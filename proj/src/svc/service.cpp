#include "nh/svc/service.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>

#include "nh/core/visemes.hpp"

namespace nh::svc {

namespace {

constexpr int kMaxFrames = 25 * 120;
constexpr int kMaxGrid = 16;

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    send_json(res, http_status(e.code()), error_json(e.code(), e.what()));
}

// Same shape as the Error replies, for states that are not error categories.
void send_conflict(httplib::Response& res, const std::string& code, const std::string& message) {
    send_json(res, 409, {{"error", {{"code", code}, {"message", message}}}});
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
        }
    };
}

Eigen::VectorXf numbers(const nlohmann::json& j, const std::string& field) {
    require(j.is_array(), ErrorCode::BadFormat, field + " must be an array of numbers");
    Eigen::VectorXf v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        require(j[i].is_number(), ErrorCode::BadFormat, field + " must be an array of numbers");
        v[Eigen::Index(i)] = j[i].get<float>();
    }
    require(v.allFinite(), ErrorCode::InvalidArgument, field + " must be finite");
    return v;
}

}  // namespace

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::ModelNotLoaded: return 409;
        case ErrorCode::DimensionMismatch: return 422;
        default: return 400;
    }
}

nlohmann::json error_json(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

std::string base64(const std::vector<unsigned char>& bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const unsigned v = bytes[i] << 16 | (i + 1 < bytes.size() ? bytes[i + 1] << 8 : 0) |
                           (i + 2 < bytes.size() ? bytes[i + 2] : 0);
        out += table[v >> 18 & 63];
        out += table[v >> 12 & 63];
        out += i + 1 < bytes.size() ? table[v >> 6 & 63] : '=';
        out += i + 2 < bytes.size() ? table[v & 63] : '=';
    }
    return out;
}

AnimateRequest parse_animate_request(const nlohmann::json& body, const Pipeline& pipeline) {
    require(body.is_object(), ErrorCode::BadFormat, "request body must be a JSON object");
    const bool has_phn = body.contains("phn"), has_ids = body.contains("viseme_ids");
    require(has_phn != has_ids, ErrorCode::BadFormat, "give exactly one of phn or viseme_ids");
    const bool has_point = body.contains("style_point"), has_vec = body.contains("style_vec");
    require(has_point != has_vec, ErrorCode::BadFormat, "give exactly one of style_point or style_vec");

    AnimateRequest r;
    const VisemeTable& table = VisemeTable::builtin();
    if (has_phn) {
        require(body["phn"].is_string(), ErrorCode::BadFormat, "phn must be the text of a .phn file");
        const auto phonemes = parse_phn(body["phn"].get<std::string>());
        require(!phonemes.empty(), ErrorCode::InvalidArgument, "phn has no phonemes");
        double end = 0;
        for (const auto& p : phonemes) end = std::max(end, p.end);
        require(end * kFps <= kMaxFrames, ErrorCode::InvalidArgument, "clip too long");
        r.visemes = phonemes_to_visemes(phonemes, end, table);
    } else {
        const auto& ids = body["viseme_ids"];
        require(ids.is_array(), ErrorCode::BadFormat, "viseme_ids must be an array of integers");
        for (const auto& v : ids) {
            require(v.is_number_integer(), ErrorCode::BadFormat, "viseme_ids must be an array of integers");
            const int id = v.get<int>();
            require(id >= 0 && id < table.viseme_count(), ErrorCode::InvalidArgument,
                    "viseme id " + std::to_string(id) + " out of range");
            r.visemes.ids.push_back(id);
        }
        require(int(r.visemes.ids.size()) <= kMaxFrames, ErrorCode::InvalidArgument, "clip too long");
    }
    require(r.visemes.size() > 0, ErrorCode::InvalidArgument, "empty viseme sequence");

    if (has_point) {
        const Eigen::VectorXf p = numbers(body["style_point"], "style_point");
        require(p.size() == 2, ErrorCode::BadFormat, "style_point must be [x, y]");
        r.style = pipeline.style_at(p.head<2>());
    } else {
        r.style = numbers(body["style_vec"], "style_vec");
        require(r.style.size() == pipeline.style_dim(), ErrorCode::DimensionMismatch,
                "style_vec must have " + std::to_string(pipeline.style_dim()) + " entries, got " +
                    std::to_string(r.style.size()));
    }
    return r;
}

Service::Service(std::shared_ptr<const Pipeline> pipeline, const ServeConfig& config)
    : pipeline_(std::move(pipeline)), config_(config) {
    for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { work(); });
}

Service::~Service() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
}

std::shared_ptr<Service::Job> Service::find(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    require(it != jobs_.end(), ErrorCode::NotFound, "unknown job '" + id + "'");
    return it->second;
}

nlohmann::json Service::job_status(const Job& job) const {
    // One step for the animation, one per rendered frame.
    const int steps = 1 + (pipeline_->can_render() ? job.frames : 0);
    int done = job.params.empty() ? 0 : 1 + int(job.pngs.size());
    if (job.state == "done") done = steps;
    nlohmann::json j = {{"state", job.state},
                        {"progress", job.frames ? double(done) / double(steps) : 0.0},
                        {"frames", job.frames},
                        {"frames_rendered", job.pngs.size()}};
    if (!job.error.is_null()) j["error"] = job.error;
    return j;
}

void Service::work() {
    for (;;) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(mutex_);
            wake_.wait(lock, [&] { return stop_ || !queue_.empty(); });
            if (stop_) return;
            job = queue_.front();
            queue_.pop_front();
            job->state = "running";
        }
        try {
            const AnimationSequence seq = pipeline_->animate(job->request.visemes, job->request.style);
            {
                std::lock_guard lock(mutex_);
                job->frames = seq.size();
                job->params = params_json(seq).dump();
            }
            if (pipeline_->can_render()) {
                for (const auto& frame : seq.frames) {
                    auto png = encode_png(pipeline_->render(frame));
                    std::lock_guard lock(mutex_);
                    if (stop_) return;
                    job->pngs.push_back(std::move(png));
                }
            }
            std::lock_guard lock(mutex_);
            job->state = "done";
        } catch (const Error& e) {
            std::lock_guard lock(mutex_);
            job->state = "failed";
            job->error = error_json(e.code(), e.what())["error"];
        } catch (const std::exception& e) {
            std::lock_guard lock(mutex_);
            job->state = "failed";
            job->error = {{"code", "internal"}, {"message", e.what()}};
        }
    }
}

nlohmann::json Service::style_grid(int n) const {
    const auto grid = anim::style_grid(pipeline_->style_map(), n);
    nlohmann::json j = anim::style_grid_json(grid, n);
    // Preview: first frame of a short idle clip in each style.
    VisemeSequence idle;
    idle.ids.assign(16, kIdleViseme);
    nlohmann::json thumbs = nlohmann::json::array();
    for (const auto& g : grid) {
        if (!pipeline_->can_render()) {
            thumbs.push_back(nullptr);
            continue;
        }
        const AnimationSequence seq = pipeline_->animate(idle, g.style);
        thumbs.push_back("data:image/png;base64," + base64(encode_png(pipeline_->render(seq.frames.front()))));
    }
    j["thumbnails"] = std::move(thumbs);
    return j;
}

void Service::mount(httplib::Server& server) {
    auto need_model = [this] {
        require(pipeline_ != nullptr, ErrorCode::ModelNotLoaded, "no model loaded; check the model directory");
    };

    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  {{"status", pipeline_ ? "ok" : "no_model"},
                   {"model_versions", pipeline_ ? pipeline_->versions() : nlohmann::json::object()}});
    }));

    server.Get("/style-grid", guarded([this, need_model](const httplib::Request& req, httplib::Response& res) {
        int n = 5;
        if (req.has_param("n")) {
            const std::string s = req.get_param_value("n");
            try {
                std::size_t used = 0;
                n = std::stoi(s, &used);
                require(used == s.size(), ErrorCode::InvalidArgument, "");
            } catch (const std::exception&) {
                fail(ErrorCode::InvalidArgument, "n must be an integer");
            }
        }
        require(n >= 1 && n <= kMaxGrid, ErrorCode::InvalidArgument,
                "n must be in [1, " + std::to_string(kMaxGrid) + "]");
        need_model();
        send_json(res, 200, style_grid(n));
    }));

    server.Post("/animate", guarded([this, need_model](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::BadFormat, std::string("malformed JSON: ") + e.what());
        }
        require(body.is_object(), ErrorCode::BadFormat, "request body must be a JSON object");
        need_model();
        auto job = std::make_shared<Job>();
        job->request = parse_animate_request(body, *pipeline_);
        std::string id;
        {
            std::lock_guard lock(mutex_);
            id = "job-" + std::to_string(next_id_++);
            jobs_[id] = job;
            queue_.push_back(job);
        }
        wake_.notify_one();
        send_json(res, 202, {{"id", id}, {"frames", job->request.visemes.size()}});
    }));

    server.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto job = find(req.matches[1]);
        std::lock_guard lock(mutex_);
        send_json(res, 200, job_status(*job));
    }));

    server.Get(R"(/jobs/([^/]+)/params)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto job = find(req.matches[1]);
        std::lock_guard lock(mutex_);
        if (job->state == "failed") return send_json(res, 500, {{"error", job->error}});
        if (job->params.empty()) return send_conflict(res, "job_not_ready", "parameters are not computed yet");
        res.status = 200;
        res.set_content(job->params, "application/json");
    }));

    server.Get(R"(/jobs/([^/]+)/frames/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto job = find(req.matches[1]);
        const std::string ks = req.matches[2];
        require(ks.size() < 9, ErrorCode::NotFound, "frame index out of range");
        const int k = std::stoi(ks);
        std::lock_guard lock(mutex_);
        require(pipeline_->can_render(), ErrorCode::ModelNotLoaded, "no renderer loaded");
        if (job->state == "failed") return send_json(res, 500, {{"error", job->error}});
        if (job->params.empty()) return send_conflict(res, "job_not_ready", "the clip is not animated yet");
        require(k < job->frames, ErrorCode::NotFound,
                "frame " + std::to_string(k) + " is past the clip end (" + std::to_string(job->frames) + " frames)");
        if (k >= int(job->pngs.size())) return send_conflict(res, "job_not_ready", "frame not rendered yet");
        res.status = 200;
        const auto& png = job->pngs[k];
        res.set_content(reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
    }));
}

}  // namespace nh::svc
