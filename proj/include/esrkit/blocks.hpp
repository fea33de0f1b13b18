#pragma once

#include "esrkit/graph.hpp"

namespace esrkit {

// Block zoo shared by the small SR network family. spab and esa exist both
// as standalone forward functions (unit-testable against scalar oracles)
// and as lowered primitive sequences emitted by the graph builders.

struct BlockConfig {
    enum class Kind { spab, rep_conv, edge_block, esa_simplified };
    Kind kind = Kind::spab;
    int channels = 0;
    double shift = -0.5;                        // spab attention shift
    Act inner_act = Act::silu;                  // spab stack activation
    FixedFilter filter = FixedFilter::sobel_x;  // edge_block
};

// Swift-parameter-free attention block: v = conv stack of x, attention
// a = sigmoid(v) + shift, out = (x + v) * a. Returns (out, attention).
// With shift = -0.5 the attention is an odd function of v.
struct SpabWeights {
    ConvSpec conv1, conv2, conv3;  // 3x3, channel-preserving overall
    Act inner_act = Act::silu;
};

std::pair<Tensor, Tensor> spab_forward(const Tensor& x, const SpabWeights& w,
                                       double shift = -0.5);

// Pared-down spatial attention: strided conv -> max pool -> single 3x3 conv
// -> bilinear resize back to the input size -> sigmoid gate -> x * gate.
// The convolutions run unpadded so a constant input yields a spatially
// constant gate.
struct EsaWeights {
    ConvSpec conv_down;  // 3x3, stride 2, valid
    ConvSpec conv_body;  // 3x3, valid; out channels must match x
    int pool_k = 7, pool_s = 3;
};

Tensor esa_simplified_forward(const Tensor& x, const EsaWeights& w);

// Per-channel scaled fixed filter applied as a block (optionally behind a
// 1x1 projection); equivalent to conv2d with its embedded kernel.
Tensor edge_block_forward(const Tensor& x, FixedFilter f, const std::vector<float>& scale,
                          const std::optional<ConvSpec>& pre = std::nullopt);

struct SpanBuildOptions {
    bool rep_blocks = false;  // emit SPAB convs as multi-branch rep_conv nodes
    bool with_bias = true;
    std::uint32_t seed = 0x5eedu;
    // Feature aggregation taps: 0 = head output, d = output of SPAB d.
    // Empty selects {0, 1, depth} (deduplicated).
    std::vector<int> aggregate;
};

// Reference network: head conv -> `depth` attention blocks -> concat of the
// aggregation taps -> 1x1 fusion conv to 3*scale^2 channels -> pixel
// shuffle. Weights are seeded Gaussians.
ModelGraph build_reference_span(int channels, int depth, int scale,
                                const SpanBuildOptions& opts = {});

}  // namespace esrkit
