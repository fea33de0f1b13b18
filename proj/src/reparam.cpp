#include "esrkit/reparam.hpp"

#include <cmath>

namespace esrkit {

namespace {

template <typename T>
void require_plain(const ConvSpecT<T>& c, const std::string& ctx) {
    require(c.stride_h == 1 && c.stride_w == 1,
            ctx + ": stride must be 1, got " + std::to_string(c.stride_h) + "x" +
                std::to_string(c.stride_w));
    require(c.dil_h == 1 && c.dil_w == 1,
            ctx + ": dilation must be 1, got " + std::to_string(c.dil_h) + "x" +
                std::to_string(c.dil_w));
    require(c.groups == 1, ctx + ": groups must be 1, got " + std::to_string(c.groups));
    require(c.kh() % 2 == 1 && c.kw() % 2 == 1,
            ctx + ": kernel " + std::to_string(c.kh()) + "x" + std::to_string(c.kw()) +
                " must be odd");
}

// A lowered/fused conv is always stored in same-padding form.
template <typename T>
ConvSpecT<T> plain_conv(TensorT<T> weight, std::vector<T> bias) {
    ConvSpecT<T> c;
    c.weight = std::move(weight);
    c.bias = std::move(bias);
    c.pad_h = same_pad(c.kh());
    c.pad_w = same_pad(c.kw());
    return c;
}

template <typename T>
void check_len(const std::vector<T>& v, int n, const char* name, const std::string& ctx) {
    require(int(v.size()) == n, ctx + ": " + name + " length " + std::to_string(v.size()) +
                                    " does not match channel count " + std::to_string(n));
}

const double kFilterTable[4][9] = {
    // sobel_x
    {-1, 0, 1, -2, 0, 2, -1, 0, 1},
    // sobel_y
    {-1, -2, -1, 0, 0, 0, 1, 2, 1},
    // laplacian (4-neighbour)
    {0, 1, 0, 1, -4, 1, 0, 1, 0},
    // hpf, zero-sum: [[-1,-2,-1],[-2,12,-2],[-1,-2,-1]] / 16
    {-1.0 / 16, -2.0 / 16, -1.0 / 16, -2.0 / 16, 12.0 / 16, -2.0 / 16, -1.0 / 16, -2.0 / 16,
     -1.0 / 16},
};

}  // namespace

const char* fixed_filter_name(FixedFilter f) {
    switch (f) {
        case FixedFilter::sobel_x: return "sobel_x";
        case FixedFilter::sobel_y: return "sobel_y";
        case FixedFilter::laplacian: return "laplacian";
        case FixedFilter::hpf: return "hpf";
    }
    fail("fixed_filter: unknown kind");
}

std::optional<FixedFilter> fixed_filter_from_name(const std::string& name) {
    for (FixedFilter f :
         {FixedFilter::sobel_x, FixedFilter::sobel_y, FixedFilter::laplacian, FixedFilter::hpf})
        if (name == fixed_filter_name(f)) return f;
    return std::nullopt;
}

template <typename T>
TensorT<T> fixed_filter_kernel(FixedFilter f) {
    TensorT<T> k(1, 1, 3, 3);
    for (int i = 0; i < 9; ++i) k.data[i] = T(kFilterTable[int(f)][i]);
    return k;
}

template <typename T>
ConvSpecT<T> fuse_sequential(const ConvSpecT<T>& a, const ConvSpecT<T>& b) {
    require_plain(a, "fuse_sequential(a)");
    require_plain(b, "fuse_sequential(b)");
    require(a.out_channels() == b.in_channels(),
            "fuse_sequential: a produces " + std::to_string(a.out_channels()) +
                " channels but b consumes " + std::to_string(b.in_channels()));
    const bool a_point = a.kh() == 1 && a.kw() == 1;
    const bool b_point = b.kh() == 1 && b.kw() == 1;
    require(a_point || b_point,
            "fuse_sequential: at most one factor may have spatial extent, got " +
                std::to_string(a.kh()) + "x" + std::to_string(a.kw()) + " then " +
                std::to_string(b.kh()) + "x" + std::to_string(b.kw()));

    const int co = b.out_channels();
    const int ci = a.in_channels();
    const int m = a.out_channels();

    TensorT<T> w;
    std::vector<double> bias(co, 0.0);
    if (b.bias.size() == std::size_t(co))
        for (int o = 0; o < co; ++o) bias[o] = double(b.bias[o]);

    if (b_point && !a_point) {
        // (k x k) then (1 x 1): W[o,i,u,v] = sum_m b[o,m] a[m,i,u,v]
        w = TensorT<T>(co, ci, a.kh(), a.kw());
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < ci; ++i)
                for (int u = 0; u < a.kh(); ++u)
                    for (int v = 0; v < a.kw(); ++v) {
                        double acc = 0.0;
                        for (int mm = 0; mm < m; ++mm)
                            acc += double(b.weight.at(o, mm, 0, 0)) *
                                   double(a.weight.at(mm, i, u, v));
                        w.at(o, i, u, v) = T(acc);
                    }
        if (!a.bias.empty())
            for (int o = 0; o < co; ++o)
                for (int mm = 0; mm < m; ++mm)
                    bias[o] += double(b.weight.at(o, mm, 0, 0)) * double(a.bias[mm]);
    } else {
        // (1 x 1) then (k x k): W[o,i,u,v] = sum_m b[o,m,u,v] a[m,i]
        w = TensorT<T>(co, ci, b.kh(), b.kw());
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < ci; ++i)
                for (int u = 0; u < b.kh(); ++u)
                    for (int v = 0; v < b.kw(); ++v) {
                        double acc = 0.0;
                        for (int mm = 0; mm < m; ++mm)
                            acc += double(b.weight.at(o, mm, u, v)) *
                                   double(a.weight.at(mm, i, 0, 0));
                        w.at(o, i, u, v) = T(acc);
                    }
        if (!a.bias.empty())
            for (int o = 0; o < co; ++o) {
                double acc = 0.0;
                for (int mm = 0; mm < m; ++mm) {
                    double ws = 0.0;
                    for (int u = 0; u < b.kh(); ++u)
                        for (int v = 0; v < b.kw(); ++v) ws += double(b.weight.at(o, mm, u, v));
                    acc += ws * double(a.bias[mm]);
                }
                bias[o] += acc;
            }
    }

    std::vector<T> bias_t;
    if (!a.bias.empty() || !b.bias.empty()) {
        bias_t.resize(std::size_t(co));
        for (int o = 0; o < co; ++o) bias_t[o] = T(bias[o]);
    }
    return plain_conv(std::move(w), std::move(bias_t));
}

template <typename T>
ConvSpecT<T> fuse_parallel(const std::vector<ConvSpecT<T>>& branches, int target_kh,
                           int target_kw) {
    require(!branches.empty(), "fuse_parallel: no branches");
    require(target_kh >= 1 && target_kh % 2 == 1 && target_kw >= 1 && target_kw % 2 == 1,
            "fuse_parallel: target kernel " + std::to_string(target_kh) + "x" +
                std::to_string(target_kw) + " must be odd");
    const int co = branches[0].out_channels();
    const int ci = branches[0].in_channels();
    bool any_bias = false;
    for (const auto& br : branches) {
        require_plain(br, "fuse_parallel");
        require(br.out_channels() == co && br.in_channels() == ci,
                "fuse_parallel: branch is " + std::to_string(br.in_channels()) + "->" +
                    std::to_string(br.out_channels()) + " channels but expected " +
                    std::to_string(ci) + "->" + std::to_string(co));
        require(br.kh() <= target_kh && br.kw() <= target_kw,
                "fuse_parallel: branch kernel " + std::to_string(br.kh()) + "x" +
                    std::to_string(br.kw()) + " exceeds target " + std::to_string(target_kh) +
                    "x" + std::to_string(target_kw));
        any_bias = any_bias || !br.bias.empty();
    }

    TensorT<T> w(co, ci, target_kh, target_kw);
    std::vector<double> bias(co, 0.0);
    for (const auto& br : branches) {
        const int du = (target_kh - br.kh()) / 2;
        const int dv = (target_kw - br.kw()) / 2;
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < ci; ++i)
                for (int u = 0; u < br.kh(); ++u)
                    for (int v = 0; v < br.kw(); ++v)
                        w.at(o, i, u + du, v + dv) =
                            T(double(w.at(o, i, u + du, v + dv)) +
                              double(br.weight.at(o, i, u, v)));
        if (!br.bias.empty())
            for (int o = 0; o < co; ++o) bias[o] += double(br.bias[o]);
    }

    std::vector<T> bias_t;
    if (any_bias) {
        bias_t.resize(std::size_t(co));
        for (int o = 0; o < co; ++o) bias_t[o] = T(bias[o]);
    }
    return plain_conv(std::move(w), std::move(bias_t));
}

template <typename T>
ConvSpecT<T> identity_to_kernel(int channels, int k) {
    require(channels >= 1, "identity_to_kernel: channels must be >= 1, got " +
                               std::to_string(channels));
    require(k >= 1 && k % 2 == 1,
            "identity_to_kernel: kernel size " + std::to_string(k) + " must be odd");
    TensorT<T> w(channels, channels, k, k);
    for (int c = 0; c < channels; ++c) w.at(c, c, k / 2, k / 2) = T(1);
    return plain_conv(std::move(w), {});
}

template <typename T>
ConvSpecT<T> fold_batchnorm(const ConvSpecT<T>& conv, const std::vector<T>& gamma,
                            const std::vector<T>& beta, const std::vector<T>& mean,
                            const std::vector<T>& var, double eps) {
    const int co = conv.out_channels();
    check_len(gamma, co, "gamma", "fold_batchnorm");
    check_len(beta, co, "beta", "fold_batchnorm");
    check_len(mean, co, "mean", "fold_batchnorm");
    check_len(var, co, "var", "fold_batchnorm");
    require(eps >= 0.0, "fold_batchnorm: eps must be >= 0");
    for (int o = 0; o < co; ++o)
        require(double(var[o]) >= 0.0, "fold_batchnorm: variance of channel " +
                                           std::to_string(o) + " is negative (" +
                                           std::to_string(double(var[o])) + ")");

    ConvSpecT<T> out = conv;
    out.bias.resize(std::size_t(co));
    const std::int64_t per_out =
        std::int64_t(conv.weight.shape.c) * conv.weight.shape.h * conv.weight.shape.w;
    for (int o = 0; o < co; ++o) {
        const double s = double(gamma[o]) / std::sqrt(double(var[o]) + eps);
        T* w = out.weight.data.data() + o * per_out;
        for (std::int64_t i = 0; i < per_out; ++i) w[i] = T(double(w[i]) * s);
        const double b0 = conv.bias.empty() ? 0.0 : double(conv.bias[o]);
        out.bias[std::size_t(o)] = T(double(beta[o]) + (b0 - double(mean[o])) * s);
    }
    return out;
}

template <typename T>
TensorT<T> merge_lora(const TensorT<T>& w_pt, const TensorT<T>& x_up, const TensorT<T>& y_down) {
    const auto& ws = w_pt.shape;
    const auto& xs = x_up.shape;
    const auto& ys = y_down.shape;
    require(xs.h == 1 && xs.w == 1,
            "merge_lora: up projection must be 1x1, got " + std::to_string(xs.h) + "x" +
                std::to_string(xs.w));
    require(xs.n == ws.n, "merge_lora: up projection emits " + std::to_string(xs.n) +
                              " channels but the base kernel has " + std::to_string(ws.n));
    require(ys.n == xs.c, "merge_lora: rank mismatch, down projection has " +
                              std::to_string(ys.n) + " components but up projection consumes " +
                              std::to_string(xs.c));
    require(ys.c == ws.c && ys.h == ws.h && ys.w == ws.w,
            "merge_lora: down projection shape " + ys.str() +
                " does not match the base kernel " + ws.str() + " in (C_in, kH, kW)");

    TensorT<T> out = w_pt;
    const int r = ys.n;
    for (int o = 0; o < ws.n; ++o)
        for (int i = 0; i < ws.c; ++i)
            for (int u = 0; u < ws.h; ++u)
                for (int v = 0; v < ws.w; ++v) {
                    double acc = double(w_pt.at(o, i, u, v));
                    for (int t = 0; t < r; ++t)
                        acc += double(x_up.at(o, t, 0, 0)) * double(y_down.at(t, i, u, v));
                    out.at(o, i, u, v) = T(acc);
                }
    return out;
}

template <typename T>
ConvSpecT<T> embed_fixed_filter(FixedFilter f, int channels, const std::vector<T>& scale,
                                const std::optional<ConvSpecT<T>>& pre) {
    require(channels >= 1,
            "embed_fixed_filter: channels must be >= 1, got " + std::to_string(channels));
    check_len(scale, channels, "scale", "embed_fixed_filter");
    const TensorT<T> k = fixed_filter_kernel<T>(f);

    TensorT<T> w(channels, channels, 3, 3);
    for (int c = 0; c < channels; ++c)
        for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v)
                w.at(c, c, u, v) = T(double(scale[std::size_t(c)]) * double(k.at(0, 0, u, v)));
    ConvSpecT<T> lowered = plain_conv(std::move(w), {});
    if (!pre) return lowered;

    require(pre->kh() == 1 && pre->kw() == 1,
            "embed_fixed_filter: preceding projection must be 1x1, got " +
                std::to_string(pre->kh()) + "x" + std::to_string(pre->kw()));
    require(pre->out_channels() == channels,
            "embed_fixed_filter: preceding projection emits " +
                std::to_string(pre->out_channels()) + " channels but the filter expects " +
                std::to_string(channels));
    return fuse_sequential(*pre, lowered);
}

template <typename T>
ConvSpecT<T> lower_branch(const BranchSpecT<T>& br, int target_kh, int target_kw) {
    switch (br.kind) {
        case BranchKind::conv: {
            require_plain(br.conv, "lower_branch(conv)");
            return br.conv;
        }
        case BranchKind::seq: {
            require(!br.seq.empty(), "lower_branch: seq branch has no convolutions");
            ConvSpecT<T> acc = br.seq.front();
            require_plain(acc, "lower_branch(seq)");
            for (std::size_t i = 1; i < br.seq.size(); ++i)
                acc = fuse_sequential(acc, br.seq[i]);
            return acc;
        }
        case BranchKind::identity: {
            require(br.channels >= 1, "lower_branch: identity branch needs a channel count");
            return identity_to_kernel<T>(br.channels, std::min(target_kh, target_kw));
        }
        case BranchKind::scaled_identity: {
            const int c = int(br.gamma.size());
            require(c >= 1, "lower_branch: scaled identity branch has empty gamma");
            ConvSpecT<T> id = identity_to_kernel<T>(c, std::min(target_kh, target_kw));
            const int k = id.kh();
            for (int ch = 0; ch < c; ++ch)
                id.weight.at(ch, ch, k / 2, k / 2) = br.gamma[std::size_t(ch)];
            return id;
        }
        case BranchKind::fixed_filter:
            return embed_fixed_filter(br.filter, int(br.scale.size()), br.scale, br.pre);
    }
    fail("lower_branch: unknown branch kind");
}

template <typename T>
ConvSpecT<T> fuse_block(const RepBlockSpecT<T>& block) {
    require(!block.branches.empty(), "fuse_block: block has no branches");
    std::vector<ConvSpecT<T>> lowered;
    lowered.reserve(block.branches.size());
    for (const auto& br : block.branches)
        lowered.push_back(lower_branch(br, block.target_kh, block.target_kw));
    return fuse_parallel(lowered, block.target_kh, block.target_kw);
}

namespace {

template <typename T>
TensorT<T> branch_forward(const TensorT<T>& x, const BranchSpecT<T>& br) {
    switch (br.kind) {
        case BranchKind::conv: {
            ConvSpecT<T> c = br.conv;
            c.pad_h = same_pad(c.kh());
            c.pad_w = same_pad(c.kw());
            return conv2d(x, c);
        }
        case BranchKind::seq: {
            int rf_h = 1, rf_w = 1;
            for (const auto& c : br.seq) {
                rf_h += c.kh() - 1;
                rf_w += c.kw() - 1;
            }
            TensorT<T> cur = pad2d(x, (rf_h - 1) / 2, (rf_w - 1) / 2);
            for (const auto& c : br.seq) {
                ConvSpecT<T> valid = c;
                valid.pad_h = valid.pad_w = 0;
                cur = conv2d(cur, valid);
            }
            return cur;
        }
        case BranchKind::identity: {
            require(x.shape.c == br.channels,
                    "forward_unfused: identity branch expects " + std::to_string(br.channels) +
                        " channels, got " + std::to_string(x.shape.c));
            return x;
        }
        case BranchKind::scaled_identity: {
            require(x.shape.c == int(br.gamma.size()),
                    "forward_unfused: scaled identity expects " +
                        std::to_string(br.gamma.size()) + " channels, got " +
                        std::to_string(x.shape.c));
            TensorT<T> out = x;
            for (int n = 0; n < x.shape.n; ++n)
                for (int c = 0; c < x.shape.c; ++c) {
                    T* p = &out.at(n, c, 0, 0);
                    const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
                    for (std::int64_t i = 0; i < hw; ++i) p[i] = T(p[i] * br.gamma[c]);
                }
            return out;
        }
        case BranchKind::fixed_filter: {
            // pad once, then run the stages valid: a biased projection must
            // color the pad ring before the stencil sees it, exactly as the
            // fused kernel's contracted bias does
            TensorT<T> cur = pad2d(x, 1, 1);
            if (br.pre) {
                ConvSpecT<T> p = *br.pre;
                p.pad_h = p.pad_w = 0;
                cur = conv2d(cur, p);
            }
            const int c = int(br.scale.size());
            ConvSpecT<T> dw;
            dw.weight = TensorT<T>(c, 1, 3, 3);
            const TensorT<T> k = fixed_filter_kernel<T>(br.filter);
            for (int ch = 0; ch < c; ++ch)
                for (int u = 0; u < 3; ++u)
                    for (int v = 0; v < 3; ++v)
                        dw.weight.at(ch, 0, u, v) =
                            T(double(br.scale[std::size_t(ch)]) * double(k.at(0, 0, u, v)));
            dw.groups = c;
            return conv2d(cur, dw);
        }
    }
    fail("forward_unfused: unknown branch kind");
}

}  // namespace

template <typename T>
TensorT<T> forward_unfused(const TensorT<T>& x, const RepBlockSpecT<T>& block) {
    require(!block.branches.empty(), "forward_unfused: block has no branches");
    TensorT<T> sum = branch_forward(x, block.branches[0]);
    for (std::size_t i = 1; i < block.branches.size(); ++i) {
        TensorT<T> y = branch_forward(x, block.branches[i]);
        require(y.shape == sum.shape, "forward_unfused: branch " + std::to_string(i) +
                                          " produced " + y.shape.str() + " but expected " +
                                          sum.shape.str());
        for (std::size_t j = 0; j < sum.data.size(); ++j) sum.data[j] += y.data[j];
    }
    return sum;
}

template <typename T>
std::int64_t branch_param_count(const BranchSpecT<T>& br) {
    switch (br.kind) {
        case BranchKind::conv: return br.conv.weight.numel() + std::int64_t(br.conv.bias.size());
        case BranchKind::seq: {
            std::int64_t n = 0;
            for (const auto& c : br.seq) n += c.weight.numel() + std::int64_t(c.bias.size());
            return n;
        }
        case BranchKind::identity: return 0;
        case BranchKind::scaled_identity: return std::int64_t(br.gamma.size());
        case BranchKind::fixed_filter: {
            std::int64_t n = 9 + std::int64_t(br.scale.size());
            if (br.pre) n += br.pre->weight.numel() + std::int64_t(br.pre->bias.size());
            return n;
        }
    }
    fail("branch_param_count: unknown branch kind");
}

#define ESRKIT_INSTANTIATE_REPARAM(T)                                                        \
    template TensorT<T> fixed_filter_kernel<T>(FixedFilter);                                 \
    template ConvSpecT<T> fuse_sequential<T>(const ConvSpecT<T>&, const ConvSpecT<T>&);      \
    template ConvSpecT<T> fuse_parallel<T>(const std::vector<ConvSpecT<T>>&, int, int);      \
    template ConvSpecT<T> identity_to_kernel<T>(int, int);                                   \
    template ConvSpecT<T> fold_batchnorm<T>(const ConvSpecT<T>&, const std::vector<T>&,      \
                                            const std::vector<T>&, const std::vector<T>&,    \
                                            const std::vector<T>&, double);                  \
    template TensorT<T> merge_lora<T>(const TensorT<T>&, const TensorT<T>&,                  \
                                      const TensorT<T>&);                                    \
    template ConvSpecT<T> embed_fixed_filter<T>(FixedFilter, int, const std::vector<T>&,     \
                                                const std::optional<ConvSpecT<T>>&);         \
    template ConvSpecT<T> lower_branch<T>(const BranchSpecT<T>&, int, int);                  \
    template ConvSpecT<T> fuse_block<T>(const RepBlockSpecT<T>&);                            \
    template TensorT<T> forward_unfused<T>(const TensorT<T>&, const RepBlockSpecT<T>&);      \
    template std::int64_t branch_param_count<T>(const BranchSpecT<T>&);

ESRKIT_INSTANTIATE_REPARAM(float)
ESRKIT_INSTANTIATE_REPARAM(double)
#undef ESRKIT_INSTANTIATE_REPARAM

}  // namespace esrkit
