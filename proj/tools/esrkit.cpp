#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "esrkit/image_io.hpp"
#include "esrkit/metrics.hpp"
#include "esrkit/model_io.hpp"
#include "esrkit/profiler.hpp"
#include "esrkit/scoring.hpp"

using nlohmann::json;
using namespace esrkit;

namespace {

std::string fixed(double v, int places) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", places, v);
    return buf;
}

void parse_input_size(const std::string& s, int& h, int& w) {
    const auto x = s.find('x');
    require(x != std::string::npos && x > 0 && x + 1 < s.size(),
            "--input must look like HxW, e.g. 256x256, got '" + s + "'");
    const auto to_dim = [&](const std::string& part, const char* which) {
        int v = 0;
        std::size_t used = 0;
        try {
            v = std::stoi(part, &used);
        } catch (...) {
            used = 0;
        }
        require(used == part.size() && used > 0,
                std::string("--input ") + which + " is not an integer: '" + s + "'");
        return v;
    };
    h = to_dim(s.substr(0, x), "height");
    w = to_dim(s.substr(x + 1), "width");
    require(h >= 1 && w >= 1, "--input dimensions must be positive, got '" + s + "'");
}

Tensor scaled255(const Image8& img) {
    Tensor t = to_tensor(img);
    for (float& v : t.data) v *= 255.0f;
    return t;
}

int cmd_infer(const std::string& model_path, const std::string& in_path,
              const std::string& out_path, bool fused) {
    ModelGraph g = load_model(model_path);
    if (fused) g = fuse_graph(g);
    const Image8 src = load_image(in_path);
    const Tensor y = forward(g, to_tensor(src));
    save_image(out_path, to_image(y));
    std::cout << "wrote " << out_path << " (" << y.shape.w << "x" << y.shape.h << ", x" << g.scale
              << (fused ? ", fused" : "") << ")\n";
    return 0;
}

int cmd_fuse(const std::string& model_path, const std::string& out_path) {
    const ModelGraph g = load_model(model_path);
    const ModelGraph fused = fuse_graph(g);
    save_model(out_path, fused);
    std::cout << "wrote " << out_path << ": params " << count_params(g) << " -> "
              << count_params(fused) << "\n";
    return 0;
}

json runtime_json(const RuntimeStats& r) {
    return json{{"mean_ms", r.mean_ms},
                {"median_ms", r.median_ms},
                {"min_ms", r.min_ms},
                {"reps", r.reps},
                {"warmup", r.warmup}};
}

int cmd_profile(const std::string& model_path, const std::string& input, int reps,
                bool as_json) {
    int h = 0, w = 0;
    parse_input_size(input, h, w);
    const ModelGraph g = load_model(model_path);
    const std::int64_t params = count_params(g);
    const std::int64_t flops = count_flops(g, h, w);
    const RuntimeStats rt = measure_runtime(g, h, w, 5, reps);
    if (as_json) {
        json j{{"model", model_path},
               {"input_h", h},
               {"input_w", w},
               {"params", params},
               {"params_m", double(params) / 1e6},
               {"flops", flops},
               {"flops_g", double(flops) / 1e9},
               {"runtime", runtime_json(rt)},
               {"threads", rt.threads},
               {"cpu", rt.cpu_model}};
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::cout << "model:   " << model_path << "\n"
              << "input:   " << h << "x" << w << "\n"
              << "params:  " << params << " (" << fixed(double(params) / 1e6, 3) << " M)\n"
              << "flops:   " << flops << " (" << fixed(double(flops) / 1e9, 2)
              << " G, 1 MAC = 1 FLOP)\n"
              << "runtime: median " << fixed(rt.median_ms, 3) << " ms, mean "
              << fixed(rt.mean_ms, 3) << " ms, min " << fixed(rt.min_ms, 3) << " ms (reps "
              << rt.reps << ", warmup " << rt.warmup << ", threads " << rt.threads << ")\n"
              << "cpu:     " << rt.cpu_model << "\n";
    return 0;
}

int cmd_psnr(const std::string& a_path, const std::string& b_path, int shave, bool as_json) {
    const Tensor a = scaled255(load_image(a_path));
    const Tensor b = scaled255(load_image(b_path));
    PsnrOptions opts;
    opts.shave = shave;
    const double v = psnr(a, b, opts);
    const bool inf = std::isinf(v);
    if (as_json) {
        json j{{"a", a_path}, {"b", b_path}, {"shave", shave}, {"infinite", inf}};
        j["psnr_db"] = inf ? json(nullptr) : json(v);
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << (inf ? std::string("inf") : fixed(v, 4)) << "\n";
    }
    return 0;
}

std::string sub_score_cell(double s, int sub_rank, bool ranked) {
    std::string cell = format_score(s);
    if (ranked) cell += " (" + std::to_string(sub_rank) + ")";
    return cell;
}

int cmd_score(const std::string& csv_path, bool as_json) {
    const auto records = load_metric_csv_file(csv_path);
    const auto rows = rank(records);
    if (as_json) {
        json out = json::array();
        for (const auto& r : rows) {
            json j{{"team", r.record.team},
                   {"rank", r.rank},
                   {"eligible", r.eligible},
                   {"baseline", r.is_baseline},
                   {"psnr_val", r.record.psnr_val},
                   {"psnr_test", r.record.psnr_test},
                   {"runtime_avg_ms", r.record.runtime_avg_ms()},
                   {"params_m", r.record.params_m},
                   {"flops_g", r.record.flops_g},
                   {"s_runtime", r.s_runtime},
                   {"s_params", r.s_params},
                   {"s_flops", r.s_flops},
                   {"s_final", r.s_final},
                   {"s_runtime_str", format_score(r.s_runtime)},
                   {"s_params_str", format_score(r.s_params)},
                   {"s_flops_str", format_score(r.s_flops)},
                   {"s_final_str", format_score(r.s_final)},
                   {"rank_runtime", r.rank_runtime},
                   {"rank_params", r.rank_params},
                   {"rank_flops", r.rank_flops}};
            out.push_back(std::move(j));
        }
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    std::cout << std::left << std::setw(5) << "rank" << std::setw(24) << "team" << std::setw(7)
              << "val" << std::setw(7) << "test" << std::setw(14) << "runtime" << std::setw(14)
              << "params" << std::setw(14) << "flops" << std::setw(10) << "final"
              << "\n";
    for (const auto& r : rows) {
        const bool ranked = r.rank > 0;
        std::string tag;
        if (r.is_baseline)
            tag = "  [reference]";
        else if (!r.eligible)
            tag = "  [not eligible]";
        std::cout << std::left << std::setw(5) << (ranked ? std::to_string(r.rank) : "-")
                  << std::setw(24) << r.record.team << std::setw(7) << fixed(r.record.psnr_val, 2)
                  << std::setw(7) << fixed(r.record.psnr_test, 2) << std::setw(14)
                  << sub_score_cell(r.s_runtime, r.rank_runtime, ranked) << std::setw(14)
                  << sub_score_cell(r.s_params, r.rank_params, ranked) << std::setw(14)
                  << sub_score_cell(r.s_flops, r.rank_flops, ranked) << std::setw(10)
                  << format_score(r.s_final) << tag << "\n";
    }
    return 0;
}

int cmd_bench(const std::string& model_path, const std::string& input, int reps, bool as_json) {
    int h = 0, w = 0;
    parse_input_size(input, h, w);
    const ModelGraph g = load_model(model_path);
    const ModelGraph fused = fuse_graph(g);
    const auto [ru, rf] = measure_runtime_paired(g, fused, h, w, 5, reps);
    const std::int64_t pu = count_params(g), pf = count_params(fused);
    const std::int64_t fu = count_flops(g, h, w), ff = count_flops(fused, h, w);
    const double speedup = rf.median_ms > 0.0 ? ru.median_ms / rf.median_ms : 0.0;
    if (as_json) {
        json j{{"model", model_path},
               {"input_h", h},
               {"input_w", w},
               {"unfused", {{"params", pu}, {"flops", fu}, {"runtime", runtime_json(ru)}}},
               {"fused", {{"params", pf}, {"flops", ff}, {"runtime", runtime_json(rf)}}},
               {"speedup_median", speedup},
               {"threads", ru.threads},
               {"cpu", ru.cpu_model}};
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::cout << "input:   " << h << "x" << w << " (reps " << reps << ", threads " << ru.threads
              << ")\n"
              << "unfused: params " << pu << ", flops " << fu << ", median "
              << fixed(ru.median_ms, 3) << " ms, mean " << fixed(ru.mean_ms, 3) << " ms\n"
              << "fused:   params " << pf << ", flops " << ff << ", median "
              << fixed(rf.median_ms, 3) << " ms, mean " << fixed(rf.mean_ms, 3) << " ms\n"
              << "speedup: x" << fixed(speedup, 2) << " (median)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"esrkit: efficient super-resolution toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads,
                   "engine thread count, 0 = library default (the ESRKIT_THREADS env var overrides)");

    std::string model_path, in_path, out_path, a_path, b_path, csv_path;
    std::string input_size = "256x256";
    bool fused = false, as_json = false;
    int reps = 50, shave = 4;

    auto* infer = app.add_subcommand("infer", "run a model on an image");
    infer->add_option("--model", model_path, "model JSON path")->required();
    infer->add_option("--in", in_path, "input image (.png/.ppm)")->required();
    infer->add_option("--out", out_path, "output image (.png/.ppm)")->required();
    infer->add_flag("--fused", fused, "fuse re-param blocks before running");

    auto* fuse = app.add_subcommand("fuse", "rewrite re-param blocks into single convolutions");
    fuse->add_option("--model", model_path, "model JSON path")->required();
    fuse->add_option("--out", out_path, "fused model JSON path")->required();

    auto* profile = app.add_subcommand("profile", "params, FLOPs and wall-clock runtime");
    profile->add_option("--model", model_path, "model JSON path")->required();
    profile->add_option("--input", input_size, "input size HxW (default 256x256)");
    profile->add_option("--reps", reps, "timing repetitions (default 50)");
    profile->add_flag("--json", as_json, "machine-readable output");

    auto* psnr_cmd = app.add_subcommand("psnr", "fidelity between two images");
    psnr_cmd->add_option("--a", a_path, "first image")->required();
    psnr_cmd->add_option("--b", b_path, "second image")->required();
    psnr_cmd->add_option("--shave", shave, "border pixels to discard (default 4)");
    psnr_cmd->add_flag("--json", as_json, "machine-readable output");

    auto* score = app.add_subcommand("score", "score and rank a metrics CSV");
    score->add_option("--csv", csv_path, "metrics CSV path")->required();
    score->add_flag("--json", as_json, "machine-readable output");

    auto* bench = app.add_subcommand("bench", "paired unfused vs fused timing");
    bench->add_option("--model", model_path, "model JSON path")->required();
    bench->add_option("--input", input_size, "input size HxW (default 256x256)");
    bench->add_option("--reps", reps, "timing repetitions (default 50)");
    bench->add_flag("--json", as_json, "machine-readable output");

    // global flags such as --threads may trail the subcommand
    for (auto* sub : {infer, fuse, profile, psnr_cmd, score, bench}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        configure_threads(threads);
        if (app.got_subcommand(infer)) return cmd_infer(model_path, in_path, out_path, fused);
        if (app.got_subcommand(fuse)) return cmd_fuse(model_path, out_path);
        if (app.got_subcommand(profile)) return cmd_profile(model_path, input_size, reps, as_json);
        if (app.got_subcommand(psnr_cmd)) return cmd_psnr(a_path, b_path, shave, as_json);
        if (app.got_subcommand(score)) return cmd_score(csv_path, as_json);
        if (app.got_subcommand(bench)) return cmd_bench(model_path, input_size, reps, as_json);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << "usage error: no subcommand given\n";
    return 2;
}
