#include "esrkit/blocks.hpp"

#include <algorithm>
#include <cmath>

namespace esrkit {

namespace {

ConvSpec samepad(ConvSpec c) {
    c.pad_h = same_pad(c.kh());
    c.pad_w = same_pad(c.kw());
    return c;
}

}  // namespace

std::pair<Tensor, Tensor> spab_forward(const Tensor& x, const SpabWeights& w, double shift) {
    require(w.conv1.in_channels() == x.shape.c,
            "spab: conv1 consumes " + std::to_string(w.conv1.in_channels()) +
                " channels but input has " + std::to_string(x.shape.c));
    require(w.conv3.out_channels() == x.shape.c,
            "spab: conv3 emits " + std::to_string(w.conv3.out_channels()) +
                " channels but the residual needs " + std::to_string(x.shape.c));

    Tensor v = conv2d(x, samepad(w.conv1));
    v = activation(v, w.inner_act);
    v = conv2d(v, samepad(w.conv2));
    v = activation(v, w.inner_act);
    v = conv2d(v, samepad(w.conv3));

    Tensor att = activation(v, Act::shifted_sigmoid, shift);
    Tensor out = mul(add(x, v), att);
    return {std::move(out), std::move(att)};
}

Tensor esa_simplified_forward(const Tensor& x, const EsaWeights& w) {
    require(w.conv_down.in_channels() == x.shape.c,
            "esa: strided conv consumes " + std::to_string(w.conv_down.in_channels()) +
                " channels but input has " + std::to_string(x.shape.c));
    require(w.conv_body.out_channels() == x.shape.c,
            "esa: body conv emits " + std::to_string(w.conv_body.out_channels()) +
                " channels but the gate needs " + std::to_string(x.shape.c));

    ConvSpec down = w.conv_down;
    down.stride_h = down.stride_w = 2;
    down.pad_h = down.pad_w = 0;
    ConvSpec body = w.conv_body;
    body.stride_h = body.stride_w = 1;
    body.pad_h = body.pad_w = 0;

    Tensor g = conv2d(x, down);
    g = maxpool(g, w.pool_k, w.pool_s);
    g = conv2d(g, body);
    g = bilinear_resize(g, x.shape.h, x.shape.w);
    g = activation(g, Act::sigmoid);
    return mul(x, g);
}

Tensor edge_block_forward(const Tensor& x, FixedFilter f, const std::vector<float>& scale,
                          const std::optional<ConvSpec>& pre) {
    return conv2d(x, embed_fixed_filter(f, int(scale.size()), scale, pre));
}

namespace {

// Seeded per-tensor init; stddev shrinks with fan-in to keep activations in
// a range where float32 comparisons against fused forms stay tight.
ConvSpec init_conv(int co, int ci, int k, bool bias, std::uint32_t seed, double gain = 1.0) {
    ConvSpec c = make_conv<float>(co, ci, k, k, bias, 1, same_pad(k));
    const double stddev = gain * std::sqrt(1.0 / (double(ci) * k * k));
    fill_normal(c.weight, seed, stddev);
    if (bias) {
        std::mt19937 rng(seed ^ 0x9e3779b9u);
        std::normal_distribution<double> d(0.0, 0.01);
        for (auto& b : c.bias) b = float(d(rng));
    }
    return c;
}

// Multi-branch stand-in for one 3x3 conv: 1x1 -> 3x3 expansion branches at
// widths C, 2C, 3C plus an identity skip.
RepBlockSpec make_gain_rep(int co, int ci, bool bias, std::uint32_t seed) {
    RepBlockSpec rep;
    rep.target_kh = rep.target_kw = 3;
    int s = 0;
    for (int gain : {1, 2, 3}) {
        BranchSpec br;
        br.kind = BranchKind::seq;
        br.seq.push_back(init_conv(ci * gain, ci, 1, bias, seed + 101 * ++s, 0.5));
        br.seq.push_back(init_conv(co, ci * gain, 3, bias, seed + 101 * ++s, 0.5));
        rep.branches.push_back(std::move(br));
    }
    if (ci == co) {
        BranchSpec skip;
        skip.kind = BranchKind::identity;
        skip.channels = ci;
        rep.branches.push_back(std::move(skip));
    }
    return rep;
}

GraphNode conv_node(std::string id, std::string in, ConvSpec c) {
    GraphNode n;
    n.id = std::move(id);
    n.kind = NodeKind::conv;
    n.inputs = {std::move(in)};
    n.conv = std::move(c);
    return n;
}

GraphNode act_node(std::string id, std::string in, Act a, double param) {
    GraphNode n;
    n.id = std::move(id);
    n.kind = NodeKind::act;
    n.inputs = {std::move(in)};
    n.act = a;
    n.act_param = param;
    return n;
}

}  // namespace

ModelGraph build_reference_span(int channels, int depth, int scale,
                                const SpanBuildOptions& opts) {
    require(channels >= 8, "build_reference_span: channels must be >= 8, got " +
                               std::to_string(channels));
    require(depth >= 1,
            "build_reference_span: depth must be >= 1, got " + std::to_string(depth));
    require(scale == 2 || scale == 3 || scale == 4,
            "build_reference_span: scale must be one of {2, 3, 4}, got " +
                std::to_string(scale));

    std::vector<int> taps = opts.aggregate;
    if (taps.empty()) taps = {0, 1, depth};
    std::sort(taps.begin(), taps.end());
    taps.erase(std::unique(taps.begin(), taps.end()), taps.end());
    for (int t : taps)
        require(0 <= t && t <= depth, "build_reference_span: aggregation tap " +
                                          std::to_string(t) + " outside [0, depth]");

    ModelGraph g;
    g.scale = scale;

    GraphNode in;
    in.id = "in";
    in.kind = NodeKind::input;
    in.channels = 3;
    g.nodes.push_back(std::move(in));

    std::uint32_t seed = opts.seed;
    g.nodes.push_back(conv_node("head", "in", init_conv(channels, 3, 3, opts.with_bias, ++seed)));

    // tap id lookup: 0 -> head, d -> b{d}.out
    std::vector<std::string> tap_ids(std::size_t(depth) + 1);
    tap_ids[0] = "head";

    std::string prev = "head";
    for (int d = 1; d <= depth; ++d) {
        const std::string b = "b" + std::to_string(d);
        auto emit_conv = [&](const std::string& id, const std::string& src) {
            if (opts.rep_blocks) {
                GraphNode n;
                n.id = id;
                n.kind = NodeKind::rep_conv;
                n.inputs = {src};
                n.rep = make_gain_rep(channels, channels, opts.with_bias, ++seed * 7919u);
                g.nodes.push_back(std::move(n));
            } else {
                g.nodes.push_back(
                    conv_node(id, src, init_conv(channels, channels, 3, opts.with_bias, ++seed)));
            }
        };
        emit_conv(b + ".c1", prev);
        g.nodes.push_back(act_node(b + ".a1", b + ".c1", Act::silu, 0.0));
        emit_conv(b + ".c2", b + ".a1");
        g.nodes.push_back(act_node(b + ".a2", b + ".c2", Act::silu, 0.0));
        emit_conv(b + ".c3", b + ".a2");
        g.nodes.push_back(act_node(b + ".att", b + ".c3", Act::shifted_sigmoid, -0.5));
        GraphNode sum;
        sum.id = b + ".sum";
        sum.kind = NodeKind::add;
        sum.inputs = {prev, b + ".c3"};
        g.nodes.push_back(std::move(sum));
        GraphNode out;
        out.id = b + ".out";
        out.kind = NodeKind::mul;
        out.inputs = {b + ".sum", b + ".att"};
        g.nodes.push_back(std::move(out));
        prev = b + ".out";
        tap_ids[std::size_t(d)] = prev;
    }

    GraphNode cat;
    cat.id = "cat";
    cat.kind = NodeKind::concat;
    for (int t : taps) cat.inputs.push_back(tap_ids[std::size_t(t)]);
    g.nodes.push_back(std::move(cat));

    const int cat_c = channels * int(taps.size());
    g.nodes.push_back(conv_node(
        "fuse", "cat", init_conv(3 * scale * scale, cat_c, 1, opts.with_bias, ++seed)));

    GraphNode shuffle;
    shuffle.id = "up";
    shuffle.kind = NodeKind::pixel_shuffle;
    shuffle.inputs = {"fuse"};
    shuffle.factor = scale;
    g.nodes.push_back(std::move(shuffle));

    validate(g);
    return g;
}

}  // namespace esrkit
