#include "esrkit/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace esrkit {

namespace {

std::int64_t conv_param_count(const ConvSpec& c) {
    return c.weight.numel() + std::int64_t(c.bias.size());
}

std::int64_t rep_param_count(const RepBlockSpec& rep, bool include_frozen) {
    std::int64_t n = 0;
    for (const auto& br : rep.branches) {
        n += branch_param_count(br);
        if (!include_frozen && br.kind == BranchKind::fixed_filter) n -= 9;
    }
    return n;
}

// MACs of a convolution at the given output size.
std::int64_t conv_macs(const ConvSpec& c, const Shape4& out) {
    return std::int64_t(out.h) * out.w * out.c * c.weight.shape.c * c.kh() * c.kw() * out.n;
}

std::int64_t conv_flops(const ConvSpec& c, const Shape4& out, const FlopOptions& opts) {
    std::int64_t f = conv_macs(c, out) * opts.mac_factor;
    if (opts.mac_factor == 2 && c.has_bias()) f += std::int64_t(out.h) * out.w * out.c * out.n;
    return f;
}

// FLOPs of one rep_conv node as executed unfused at input shape `in`
// (spatial dims are preserved by every branch).
std::int64_t rep_flops(const RepBlockSpec& rep, const Shape4& in, const FlopOptions& opts) {
    std::int64_t f = 0;
    const std::int64_t plane = std::int64_t(in.h) * in.w * in.n;
    for (const auto& br : rep.branches) {
        switch (br.kind) {
            case BranchKind::conv: {
                Shape4 out = in;
                out.c = br.conv.out_channels();
                f += conv_flops(br.conv, out, opts);
                break;
            }
            case BranchKind::seq: {
                int rf_h = 1, rf_w = 1;
                for (const auto& c : br.seq) {
                    rf_h += c.kh() - 1;
                    rf_w += c.kw() - 1;
                }
                int h = in.h + (rf_h - 1), w = in.w + (rf_w - 1);
                for (const auto& c : br.seq) {
                    h -= c.kh() - 1;
                    w -= c.kw() - 1;
                    Shape4 out{in.n, c.out_channels(), h, w};
                    f += conv_flops(c, out, opts);
                }
                break;
            }
            case BranchKind::identity: break;
            case BranchKind::scaled_identity:
                if (opts.include_elementwise) f += plane * int(br.gamma.size());
                break;
            case BranchKind::fixed_filter: {
                if (br.pre) {
                    Shape4 out = in;
                    out.c = br.pre->out_channels();
                    f += conv_flops(*br.pre, out, opts);
                }
                const int c = int(br.scale.size());
                // depthwise 3x3
                f += plane * c * 9 * opts.mac_factor;
                break;
            }
        }
    }
    if (opts.include_elementwise && rep.branches.size() > 1) {
        const int co = rep.branches[0].out_channels();
        f += plane * co * std::int64_t(rep.branches.size() - 1);  // branch sum
    }
    return f;
}

}  // namespace

std::int64_t count_params(const ModelGraph& g, bool include_frozen) {
    validate(g);
    std::int64_t n = 0;
    for (const auto& node : g.nodes) {
        if (node.kind == NodeKind::conv)
            n += conv_param_count(node.conv);
        else if (node.kind == NodeKind::rep_conv)
            n += rep_param_count(node.rep, include_frozen);
    }
    return n;
}

std::int64_t count_flops(const ModelGraph& g, int h, int w, const FlopOptions& opts) {
    require(opts.mac_factor == 1 || opts.mac_factor == 2,
            "count_flops: mac_factor must be 1 or 2, got " + std::to_string(opts.mac_factor));
    const auto shapes = infer_shapes(g, 1, h, w);
    std::int64_t f = 0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& node = g.nodes[i];
        const Shape4& out = shapes[i];
        const std::int64_t out_elems = out.numel();
        switch (node.kind) {
            case NodeKind::input: break;
            case NodeKind::conv: f += conv_flops(node.conv, out, opts); break;
            case NodeKind::rep_conv: {
                const Shape4& in = shapes[std::size_t(g.index_of(node.inputs[0]))];
                f += rep_flops(node.rep, in, opts);
                break;
            }
            case NodeKind::act:
            case NodeKind::add:
            case NodeKind::mul:
            case NodeKind::concat:
            case NodeKind::slice:
            case NodeKind::pixel_shuffle:
            case NodeKind::pixel_unshuffle:
                if (opts.include_elementwise) f += out_elems;
                break;
            case NodeKind::upsample:
                if (opts.include_elementwise)
                    f += node.resize == Resize::bilinear ? out_elems * 8 : out_elems;
                break;
            case NodeKind::maxpool:
                if (opts.include_elementwise)
                    f += out_elems * std::int64_t(node.pool_k) * node.pool_k;
                break;
        }
    }
    return f;
}

int configure_threads(int requested) {
    require(requested >= 0, "thread count must be >= 0, got " + std::to_string(requested));
    int n = requested;
    if (const char* env = std::getenv("ESRKIT_THREADS")) {
        try {
            n = std::stoi(env);
        } catch (...) {
            fail("ESRKIT_THREADS: not an integer: '" + std::string(env) + "'");
        }
        require(n >= 1, "ESRKIT_THREADS: thread count must be >= 1, got " + std::to_string(n));
    }
#ifdef _OPENMP
    if (n >= 1) omp_set_num_threads(n);
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::string cpu_model_name() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        const auto pos = line.find("model name");
        if (pos != std::string::npos) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                std::string name = line.substr(colon + 1);
                while (!name.empty() && name.front() == ' ') name.erase(name.begin());
                return name;
            }
        }
    }
    return "unknown";
}

namespace {

RuntimeStats stats_from(std::vector<double> ms, int warmup) {
    RuntimeStats s;
    s.reps = int(ms.size());
    s.warmup = warmup;
#ifdef _OPENMP
    s.threads = omp_get_max_threads();
#else
    s.threads = 1;
#endif
    s.cpu_model = cpu_model_name();
    double sum = 0.0, mn = ms.empty() ? 0.0 : ms[0];
    for (double v : ms) {
        sum += v;
        mn = std::min(mn, v);
    }
    s.mean_ms = ms.empty() ? 0.0 : sum / double(ms.size());
    s.min_ms = mn;
    std::sort(ms.begin(), ms.end());
    if (!ms.empty())
        s.median_ms = ms.size() % 2 ? ms[ms.size() / 2]
                                    : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
    return s;
}

double timed_forward(const ModelGraph& g, const Tensor& x) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor y = forward(g, x);
    const auto t1 = std::chrono::steady_clock::now();
    // Touch the result so the call cannot be elided.
    volatile float sink = y.data.empty() ? 0.0f : y.data[0];
    (void)sink;
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

RuntimeStats measure_runtime(const ModelGraph& g, int h, int w, int warmup, int reps,
                             std::uint32_t seed) {
    require(reps >= 1, "measure_runtime: reps must be >= 1, got " + std::to_string(reps));
    require(warmup >= 0, "measure_runtime: warmup must be >= 0");
    validate(g);
    Tensor x(1, g.nodes[0].channels, h, w);
    fill_uniform(x, seed, 0.0, 1.0);
    for (int i = 0; i < warmup; ++i) (void)timed_forward(g, x);
    std::vector<double> ms;
    ms.reserve(std::size_t(reps));
    for (int i = 0; i < reps; ++i) ms.push_back(timed_forward(g, x));
    return stats_from(std::move(ms), warmup);
}

std::pair<RuntimeStats, RuntimeStats> measure_runtime_paired(const ModelGraph& a,
                                                             const ModelGraph& b, int h, int w,
                                                             int warmup, int reps,
                                                             std::uint32_t seed) {
    require(reps >= 1, "measure_runtime_paired: reps must be >= 1");
    validate(a);
    validate(b);
    require(a.nodes[0].channels == b.nodes[0].channels,
            "measure_runtime_paired: models expect different input channels");
    Tensor x(1, a.nodes[0].channels, h, w);
    fill_uniform(x, seed, 0.0, 1.0);
    for (int i = 0; i < warmup; ++i) {
        (void)timed_forward(a, x);
        (void)timed_forward(b, x);
    }
    std::vector<double> ma, mb;
    ma.reserve(std::size_t(reps));
    mb.reserve(std::size_t(reps));
    for (int i = 0; i < reps; ++i) {
        ma.push_back(timed_forward(a, x));
        mb.push_back(timed_forward(b, x));
    }
    return {stats_from(std::move(ma), warmup), stats_from(std::move(mb), warmup)};
}

}  // namespace esrkit
