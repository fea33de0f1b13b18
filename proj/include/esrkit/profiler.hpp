#pragma once

#include "esrkit/graph.hpp"

namespace esrkit {

// Complexity accounting. One multiply-accumulate counts as one FLOP by
// default (mac_factor = 1); mac_factor = 2 books multiplies and adds
// separately, which also makes conv bias additions visible. Non-conv work
// (activations, elementwise arithmetic, data movement, pooling) is excluded
// unless include_elementwise is set.

struct FlopOptions {
    int mac_factor = 1;
    bool include_elementwise = false;
};

// Stored parameter count. Fixed (non-learnable) filter stencils are counted
// unless include_frozen is false; per-channel scales and projections around
// them are always counted.
std::int64_t count_params(const ModelGraph& g, bool include_frozen = true);

std::int64_t count_flops(const ModelGraph& g, int h = 256, int w = 256,
                         const FlopOptions& opts = {});

struct RuntimeStats {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double min_ms = 0.0;
    int warmup = 0;
    int reps = 0;
    int threads = 0;
    std::string cpu_model;
};

RuntimeStats measure_runtime(const ModelGraph& g, int h, int w, int warmup = 5, int reps = 50,
                             std::uint32_t seed = 1234);

// Interleaved timing (a, b, a, b, ...) on the same input so slow drift hits
// both models equally.
std::pair<RuntimeStats, RuntimeStats> measure_runtime_paired(const ModelGraph& a,
                                                             const ModelGraph& b, int h, int w,
                                                             int warmup = 5, int reps = 50,
                                                             std::uint32_t seed = 1234);

// Engine thread count: the ESRKIT_THREADS environment variable wins,
// otherwise `requested` (0 = leave the OpenMP default). Returns the count
// now in effect.
int configure_threads(int requested);

std::string cpu_model_name();

}  // namespace esrkit
