// Drives the installed esrkit binary end to end through popen.
// argv[1] = path to the esrkit executable, argv[2] = metrics CSV fixture.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <string>

#include <json.hpp>

#include "esrkit/blocks.hpp"
#include "esrkit/image_io.hpp"
#include "esrkit/metrics.hpp"
#include "esrkit/model_io.hpp"

using nlohmann::json;
using namespace esrkit;

namespace {

std::string g_cli, g_csv;

struct RunResult {
    int status = -1;
    std::string out;  // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int rc = pclose(p);
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return r;
}

struct Fixture {
    std::string dir;
    std::string model;       // rep-block form
    std::string input_png;   // 16x12 gradient
    Image8 input_img;
};

const Fixture& fx() {
    static Fixture f = [] {
        Fixture x;
        char tmpl[] = "/tmp/esrkit_cli_XXXXXX";
        const char* d = mkdtemp(tmpl);
        REQUIRE(d != nullptr);
        x.dir = d;

        SpanBuildOptions opts;
        opts.rep_blocks = true;
        const ModelGraph g = build_reference_span(8, 1, 2, opts);
        x.model = x.dir + "/model.json";
        save_model(x.model, g);

        x.input_img = Image8(16, 12);
        for (int y = 0; y < 12; ++y)
            for (int px = 0; px < 16; ++px)
                for (int c = 0; c < 3; ++c)
                    x.input_img.at(y, px, c) = std::uint8_t((px * 16 + y * 7 + c * 40) % 256);
        x.input_png = x.dir + "/in.png";
        save_image(x.input_png, x.input_img);
        return x;
    }();
    return f;
}

int max_abs_diff(const Image8& a, const Image8& b) {
    REQUIRE(a.rgb.size() == b.rgb.size());
    int worst = 0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i)
        worst = std::max(worst, std::abs(int(a.rgb[i]) - int(b.rgb[i])));
    return worst;
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    CHECK(run("").status == 2);
    CHECK(run("").out.find("usage error") != std::string::npos);
    CHECK(run("--bogus-flag").status == 2);
    CHECK(run("frobnicate").status == 2);
    CHECK(run("infer").status == 2);  // missing required options

    const auto help = run("--help");
    CHECK(help.status == 0);
    CHECK(help.out.find("infer") != std::string::npos);
    CHECK(help.out.find("score") != std::string::npos);
}

TEST_CASE("runtime errors exit with status 2 and an error: prefix") {
    const auto r = run("profile --model /nonexistent/model.json");
    CHECK(r.status == 2);
    CHECK(r.out.find("error:") != std::string::npos);

    const auto bad_size = run("profile --model " + fx().model + " --input 16by16");
    CHECK(bad_size.status == 2);

    const auto bad_csv = run("score --csv /nonexistent.csv");
    CHECK(bad_csv.status == 2);
    CHECK(bad_csv.out.find("error:") != std::string::npos);
}

TEST_CASE("infer upscales and reports the output") {
    const auto& f = fx();
    const std::string out = f.dir + "/sr.png";
    const auto r = run("infer --model " + f.model + " --in " + f.input_png + " --out " + out);
    REQUIRE(r.status == 0);
    CHECK(r.out.find("wrote " + out) != std::string::npos);
    CHECK(r.out.find("32x24") != std::string::npos);

    const Image8 sr = load_image(out);
    CHECK(sr.w == 32);
    CHECK(sr.h == 24);
}

TEST_CASE("fuse rewrites the model and infer --fused matches it") {
    const auto& f = fx();
    const std::string fused_model = f.dir + "/fused.json";
    const auto r = run("fuse --model " + f.model + " --out " + fused_model);
    REQUIRE(r.status == 0);
    CHECK(r.out.find("params") != std::string::npos);

    const ModelGraph fused = load_model(fused_model);
    CHECK(!has_rep_nodes(fused));

    const std::string out_flag = f.dir + "/sr_flag.png";
    const std::string out_model = f.dir + "/sr_fusedmodel.png";
    const std::string out_plain = f.dir + "/sr_plain.png";
    REQUIRE(run("infer --fused --model " + f.model + " --in " + f.input_png + " --out " +
                out_flag).status == 0);
    REQUIRE(run("infer --model " + fused_model + " --in " + f.input_png + " --out " +
                out_model).status == 0);
    REQUIRE(run("infer --model " + f.model + " --in " + f.input_png + " --out " +
                out_plain).status == 0);

    // the --fused flag and a pre-fused model are the same computation
    CHECK(max_abs_diff(load_image(out_flag), load_image(out_model)) == 0);
    // fusion is lossless up to fp noise: at most one 8-bit gray level
    CHECK(max_abs_diff(load_image(out_flag), load_image(out_plain)) <= 1);
}

TEST_CASE("psnr prints inf for identical inputs") {
    const auto& f = fx();
    const auto r = run("psnr --a " + f.input_png + " --b " + f.input_png);
    REQUIRE(r.status == 0);
    CHECK(r.out == "inf\n");

    const auto j = json::parse(run("psnr --json --a " + f.input_png + " --b " + f.input_png).out);
    CHECK(j["infinite"] == true);
    CHECK(j["psnr_db"].is_null());
    CHECK(j["shave"] == 4);
}

TEST_CASE("psnr matches the library on a perturbed image") {
    const auto& f = fx();
    Image8 noisy = f.input_img;
    for (int y = 5; y < 8; ++y)
        for (int x = 6; x < 10; ++x) noisy.at(y, x, 1) = std::uint8_t(noisy.at(y, x, 1) ^ 0x1f);
    const std::string noisy_png = f.dir + "/noisy.png";
    save_image(noisy_png, noisy);

    const auto r = run("psnr --a " + f.input_png + " --b " + noisy_png);
    REQUIRE(r.status == 0);
    const double printed = std::stod(r.out);

    auto scaled = [](const Image8& im) {
        Tensor t = to_tensor(im);
        for (float& v : t.data) v *= 255.0f;
        return t;
    };
    const double want = psnr(scaled(f.input_img), scaled(noisy));
    CHECK(printed == doctest::Approx(want).epsilon(1e-4));

    // shave 0 sees the same corruption (it is interior) but more clean area
    const auto r0 = run("psnr --a " + f.input_png + " --b " + noisy_png + " --shave 0");
    CHECK(std::stod(r0.out) > printed);
}

TEST_CASE("profile emits a well-formed json document") {
    const auto& f = fx();
    const auto r = run("profile --json --reps 3 --input 32x48 --model " + f.model);
    REQUIRE(r.status == 0);
    const auto j = json::parse(r.out);
    CHECK(j["input_h"] == 32);
    CHECK(j["input_w"] == 48);
    CHECK(j["params"].get<std::int64_t>() > 0);
    CHECK(j["flops"].get<std::int64_t>() > 0);
    CHECK(j["runtime"]["reps"] == 3);
    CHECK(j["runtime"]["median_ms"].get<double>() > 0.0);
    CHECK(j["threads"].get<int>() >= 1);
}

TEST_CASE("bench compares the model against its fused form") {
    const auto& f = fx();
    const auto r = run("bench --json --reps 5 --input 32x32 --model " + f.model);
    REQUIRE(r.status == 0);
    const auto j = json::parse(r.out);
    CHECK(j["unfused"]["params"].get<std::int64_t>() > j["fused"]["params"].get<std::int64_t>());
    CHECK(j["unfused"]["flops"].get<std::int64_t>() > j["fused"]["flops"].get<std::int64_t>());
    CHECK(j["speedup_median"].get<double>() > 0.0);

    const auto text = run("bench --reps 3 --input 32x32 --model " + f.model);
    REQUIRE(text.status == 0);
    CHECK(text.out.find("speedup: x") != std::string::npos);
}

TEST_CASE("score reproduces the stored leaderboard") {
    const auto r = run("score --csv " + g_csv);
    REQUIRE(r.status == 0);
    const auto first_nl = r.out.find('\n');
    const auto second_nl = r.out.find('\n', first_nl + 1);
    const std::string first_row = r.out.substr(first_nl + 1, second_nl - first_nl - 1);
    CHECK(first_row.find("EMSR") != std::string::npos);
    CHECK(first_row.find("2.53") != std::string::npos);
    CHECK(r.out.find("[reference]") != std::string::npos);
    CHECK(r.out.find("[not eligible]") != std::string::npos);

    const auto j = json::parse(run("score --json --csv " + g_csv).out);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 44);
    CHECK(j[0]["team"] == "EMSR");
    CHECK(j[0]["rank"] == 1);
    CHECK(j[0]["s_final_str"] == "2.53");
    CHECK(j.back()["team"] == "Baseline");
    CHECK(j.back()["baseline"] == true);
    CHECK(j.back()["s_final_str"] == "7.39");
}

TEST_CASE("thread count comes from the flag or the environment") {
    const auto& f = fx();
    const std::string base = "profile --json --reps 1 --input 16x16 --model " + f.model;

    const auto flag = json::parse(run("--threads 2 " + base).out);
    CHECK(flag["threads"] == 2);

    g_cli = "ESRKIT_THREADS=3 " + g_cli;
    const auto env = json::parse(run("--threads 2 " + base).out);
    g_cli = g_cli.substr(std::string("ESRKIT_THREADS=3 ").size());
    CHECK(env["threads"] == 3);

    g_cli = "ESRKIT_THREADS=zebra " + g_cli;
    const auto bad = run(base);
    g_cli = g_cli.substr(std::string("ESRKIT_THREADS=zebra ").size());
    CHECK(bad.status == 2);
    CHECK(bad.out.find("error:") != std::string::npos);

    // the global flag may trail the subcommand
    const auto trailing = json::parse(run(base + " --threads 2").out);
    CHECK(trailing["threads"] == 2);

    const auto negative = run(base + " --threads -4");
    CHECK(negative.status == 2);
    CHECK(negative.out.find("thread count must be >= 0") != std::string::npos);
}

TEST_CASE("an explicit empty --input is rejected, the default is not") {
    const auto& f = fx();
    const auto empty = run("profile --model " + f.model + " --input ''");
    CHECK(empty.status == 2);
    CHECK(empty.out.find("--input must look like HxW") != std::string::npos);

    const auto junk = run("profile --model " + f.model + " --input 16x16zzz");
    CHECK(junk.status == 2);
    CHECK(junk.out.find("--input width is not an integer") != std::string::npos);
}

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: test_cli <esrkit-binary> <metrics.csv>\n");
        return 2;
    }
    g_cli = argv[1];
    g_csv = argv[2];
    doctest::Context ctx;
    return ctx.run();
}
