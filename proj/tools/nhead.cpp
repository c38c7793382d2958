// nhead: command line front end of the pipeline.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nh/core/anim_io.hpp"
#include "nh/core/error.hpp"
#include "nh/core/visemes.hpp"
#include "nh/eval/metrics.hpp"
#include "nh/svc/config.hpp"
#include "nh/svc/pipeline.hpp"
#include "nh/svc/service.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace nh;

namespace {

Eigen::Vector2f parse_point(const std::string& s) {
    std::istringstream in(s);
    float x = 0, y = 0;
    char comma = 0;
    in >> x >> comma >> y;
    require(in && comma == ',' && (in >> std::ws).eof(), ErrorCode::InvalidArgument,
            "--style expects X,Y, got '" + s + "'");
    return {x, y};
}

Eigen::VectorXf read_style_vec(const fs::path& path) {
    std::ifstream in(path);
    require(bool(in), ErrorCode::IoError, "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadFormat, path.string() + ": " + e.what());
    }
    require(j.is_array(), ErrorCode::BadFormat, "style vector file must hold a JSON array");
    Eigen::VectorXf v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[Eigen::Index(i)] = j[i].get<float>();
    return v;
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

int report_error(const std::string& code, const std::string& message, int status) {
    std::cerr << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid neural head pipeline: data, training, animation, rendering, evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "versioned JSON config (built-in defaults if omitted)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "reseed every stage");

    auto* config_cmd = app.add_subcommand("config", "print the effective config");

    auto* synth_cmd = app.add_subcommand("synthdata", "procedural dataset");
    auto* make_cmd = synth_cmd->add_subcommand("make", "generate the dataset tree");
    synth_cmd->require_subcommand(1);
    std::string data_out;
    make_cmd->add_option("--out", data_out, "dataset directory (default: data_dir)");

    auto* train_cmd = app.add_subcommand("train", "train one stage");
    std::string stage, model_out;
    train_cmd->add_option("stage", stage, "expr | renderer | anim")
        ->required()
        ->check(CLI::IsMember({"expr", "renderer", "anim"}));
    train_cmd->add_option("--out", model_out, "model directory (default: model_dir)");

    auto* animate_cmd = app.add_subcommand("animate", "phonemes + style -> .anim");
    std::string phn, style_point, style_vec, anim_out;
    animate_cmd->add_option("--phn", phn, "phoneme timing file")->required()->check(CLI::ExistingFile);
    auto* style_opt = animate_cmd->add_option("--style", style_point, "2-D style point X,Y");
    auto* vec_opt = animate_cmd->add_option("--style-vec", style_vec, "JSON array style vector")
                        ->check(CLI::ExistingFile);
    style_opt->excludes(vec_opt);
    animate_cmd->add_option("--out", anim_out, "output .anim")->required();

    auto* render_cmd = app.add_subcommand("render", ".anim -> PNG frames");
    std::string anim_in, background, frames_out;
    render_cmd->add_option("--anim", anim_in, "animation file")->required()->check(CLI::ExistingFile);
    render_cmd->add_option("--background", background, "background plate PNG")->check(CLI::ExistingFile);
    render_cmd->add_option("--out", frames_out, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "compare image directories");
    std::string pred, gt, report;
    eval_cmd->add_option("--pred", pred, "predicted frames")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--gt", gt, "ground-truth frames")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--report", report, "also write the report here");

    auto* eval_anim_cmd = app.add_subcommand("eval-anim", "validation and probe metrics of the animation model");

    auto* grid_cmd = app.add_subcommand("stylegrid", "lattice of the 2-D style map");
    int grid_n = 5;
    grid_cmd->add_option("--n", grid_n, "points per side")->check(CLI::Range(1, 64));

    auto* serve_cmd = app.add_subcommand("serve", "HTTP API");
    std::optional<int> port;
    serve_cmd->add_option("--port", port, "listen port")->check(CLI::Range(0, 65535));
    std::string host = "127.0.0.1";
    serve_cmd->add_option("--host", host, "bind address");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), 2);
    }

    try {
        svc::NheadConfig cfg = config_path.empty() ? svc::NheadConfig{} : svc::NheadConfig::load(config_path);
        if (seed) cfg.set_seed(*seed);
        const fs::path model_dir = cfg.resolved_model_dir();

        if (*config_cmd) {
            print(cfg.to_json());
        } else if (*make_cmd) {
            if (!data_out.empty()) cfg.data_dir = data_out;
            const auto manifest = svc::run_synthdata(cfg);
            print({{"data_dir", cfg.data_dir.string()}, {"files", manifest.at("files").size()}});
        } else if (*train_cmd) {
            const fs::path out = model_out.empty() ? model_dir : fs::path(model_out);
            if (stage == "expr") print(svc::run_train_expr(cfg, out));
            else if (stage == "renderer") print(svc::run_train_renderer(cfg, out));
            else print(svc::run_train_anim(cfg, out));
        } else if (*animate_cmd) {
            require(!style_point.empty() || !style_vec.empty(), ErrorCode::InvalidArgument,
                    "give --style X,Y or --style-vec FILE");
            const auto pipeline = svc::Pipeline::load(model_dir);
            const auto phonemes = read_phn(phn);
            require(!phonemes.empty(), ErrorCode::InvalidArgument, phn + " has no phonemes");
            double end = 0;
            for (const auto& p : phonemes) end = std::max(end, p.end);
            const VisemeSequence visemes = phonemes_to_visemes(phonemes, end);
            Eigen::VectorXf style;
            if (!style_point.empty()) {
                style = pipeline->style_at(parse_point(style_point));
            } else {
                style = read_style_vec(style_vec);
                require(style.size() == pipeline->style_dim(), ErrorCode::DimensionMismatch,
                        "style vector must have " + std::to_string(pipeline->style_dim()) + " entries, got " +
                            std::to_string(style.size()));
            }
            const AnimationSequence seq = pipeline->animate(visemes, style);
            save_sequence(anim_out, seq);
            print({{"out", anim_out}, {"frames", seq.size()}, {"fps", seq.fps}});
        } else if (*render_cmd) {
            const auto pipeline = svc::Pipeline::load(model_dir);
            const AnimationSequence seq = load_sequence(anim_in);
            std::optional<ImageF> plate;
            if (!background.empty()) plate = read_png(background);
            fs::create_directories(frames_out);
            for (int t = 0; t < seq.size(); ++t) {
                char name[32];
                std::snprintf(name, sizeof name, "%05d.png", t);
                write_png(fs::path(frames_out) / name, pipeline->render(seq.frames[t], plate ? &*plate : nullptr));
            }
            print({{"out", frames_out}, {"frames", seq.size()}});
        } else if (*eval_cmd) {
            const auto r = eval::compare_image_dirs(pred, gt);
            if (!report.empty()) std::ofstream(report) << r.dump(2) << '\n';
            print(r);
        } else if (*eval_anim_cmd) {
            print(svc::evaluate_anim_models(cfg, model_dir));
        } else if (*grid_cmd) {
            const auto pipeline = svc::Pipeline::load(model_dir);
            print(anim::style_grid_json(anim::style_grid(pipeline->style_map(), grid_n), grid_n));
        } else if (*serve_cmd) {
            std::shared_ptr<const svc::Pipeline> pipeline;
            try {
                pipeline = svc::Pipeline::load(model_dir);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::ModelNotLoaded) throw;
                std::cerr << nlohmann::json{{"warning", e.what()}}.dump() << '\n';
            }
            svc::Service service(pipeline, cfg.serve);
            httplib::Server server;
            service.mount(server);
            const int p = port.value_or(cfg.serve.port);
            std::cerr << nlohmann::json{{"listening", host + ":" + std::to_string(p)}}.dump() << std::endl;
            require(server.listen(host, p), ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(p));
        }
    } catch (const Error& e) {
        return report_error(std::string(to_string(e.code())), e.what(), 1);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 1);
    }
    return 0;
}
