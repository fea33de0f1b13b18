#include "esrkit/ops.hpp"

#include <algorithm>
#include <cmath>

namespace esrkit {

namespace {

int conv_extent(int in, int pad, int dil, int k, int stride, const char* axis,
                const std::string& ctx) {
    const int span = dil * (k - 1) + 1;
    require(in + 2 * pad >= span,
            ctx + ": padded input " + axis + " extent " + std::to_string(in + 2 * pad) +
                " is smaller than the dilated kernel extent " + std::to_string(span));
    return (in + 2 * pad - span) / stride + 1;
}

template <typename T>
void validate_conv(const Shape4& x, const ConvSpecT<T>& spec, const std::string& ctx) {
    const auto& w = spec.weight.shape;
    require(w.n >= 1 && w.c >= 1 && w.h >= 1 && w.w >= 1,
            ctx + ": weight shape " + w.str() + " has a non-positive dimension");
    require(spec.groups >= 1, ctx + ": groups must be >= 1, got " + std::to_string(spec.groups));
    require(w.n % spec.groups == 0, ctx + ": output channels " + std::to_string(w.n) +
                                        " not divisible by groups " + std::to_string(spec.groups));
    require(x.c == w.c * spec.groups,
            ctx + ": input channels " + std::to_string(x.c) + " do not match weight (" +
                std::to_string(w.c) + " per group x " + std::to_string(spec.groups) + " groups)");
    require(spec.stride_h >= 1 && spec.stride_w >= 1,
            ctx + ": stride must be >= 1, got " + std::to_string(spec.stride_h) + "x" +
                std::to_string(spec.stride_w));
    require(spec.dil_h >= 1 && spec.dil_w >= 1,
            ctx + ": dilation must be >= 1, got " + std::to_string(spec.dil_h) + "x" +
                std::to_string(spec.dil_w));
    require(spec.pad_h >= 0 && spec.pad_w >= 0,
            ctx + ": padding must be >= 0, got " + std::to_string(spec.pad_h) + "x" +
                std::to_string(spec.pad_w));
    require(spec.bias.empty() || int(spec.bias.size()) == w.n,
            ctx + ": bias length " + std::to_string(spec.bias.size()) +
                " does not match output channels " + std::to_string(w.n));
    require(x.n >= 1 && x.h >= 1 && x.w >= 1, ctx + ": input shape " + x.str() + " is empty");
}

}  // namespace

template <typename T>
Shape4 conv2d_out_shape(const Shape4& x, const ConvSpecT<T>& spec) {
    validate_conv(x, spec, "conv2d");
    Shape4 out;
    out.n = x.n;
    out.c = spec.weight.shape.n;
    out.h = conv_extent(x.h, spec.pad_h, spec.dil_h, spec.weight.shape.h, spec.stride_h, "h",
                        "conv2d");
    out.w = conv_extent(x.w, spec.pad_w, spec.dil_w, spec.weight.shape.w, spec.stride_w, "w",
                        "conv2d");
    return out;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvSpecT<T>& spec) {
    const Shape4 os = conv2d_out_shape(x.shape, spec);
    TensorT<T> out(os);

    const int cg = spec.weight.shape.c;  // input channels per group
    const int co_per_g = os.c / spec.groups;
    const int kh = spec.weight.shape.h, kw = spec.weight.shape.w;
    const int H = x.shape.h, W = x.shape.w;
    const std::int64_t rows = std::int64_t(os.n) * os.c * os.h;

    // One output row per iteration; every output element is reduced by a
    // single thread in a fixed order (bias, then ic, kh, kw), so the result
    // is bitwise identical for any thread count.
#pragma omp parallel for schedule(static)
    for (std::int64_t row = 0; row < rows; ++row) {
        const int oh = int(row % os.h);
        const int oc = int((row / os.h) % os.c);
        const int n = int(row / (std::int64_t(os.h) * os.c));
        const int g = oc / co_per_g;
        const int ic0 = g * cg;

        const int ih0 = oh * spec.stride_h - spec.pad_h;
        int kh_lo = 0, kh_hi = kh;
        while (kh_lo < kh && ih0 + kh_lo * spec.dil_h < 0) ++kh_lo;
        while (kh_hi > kh_lo && ih0 + (kh_hi - 1) * spec.dil_h >= H) --kh_hi;

        const T* xn = x.data.data() + x.index(n, 0, 0, 0);
        const T* woc = spec.weight.data.data() + std::int64_t(oc) * cg * kh * kw;
        T* orow = out.data.data() + out.index(n, oc, oh, 0);
        const double b = spec.bias.empty() ? 0.0 : double(spec.bias[oc]);

        for (int ow = 0; ow < os.w; ++ow) {
            const int iw0 = ow * spec.stride_w - spec.pad_w;
            int kw_lo = 0, kw_hi = kw;
            while (kw_lo < kw && iw0 + kw_lo * spec.dil_w < 0) ++kw_lo;
            while (kw_hi > kw_lo && iw0 + (kw_hi - 1) * spec.dil_w >= W) --kw_hi;

            double acc = b;
            for (int ic = 0; ic < cg; ++ic) {
                const T* xc = xn + (std::int64_t(ic0 + ic) * H) * W;
                const T* wc = woc + std::int64_t(ic) * kh * kw;
                for (int u = kh_lo; u < kh_hi; ++u) {
                    const T* xr = xc + std::int64_t(ih0 + u * spec.dil_h) * W;
                    const T* wr = wc + std::int64_t(u) * kw;
                    for (int v = kw_lo; v < kw_hi; ++v)
                        acc += double(xr[iw0 + v * spec.dil_w]) * double(wr[v]);
                }
            }
            orow[ow] = T(acc);
        }
    }
    return out;
}

template <typename T>
TensorT<T> conv2d_oracle(const TensorT<T>& x, const ConvSpecT<T>& spec) {
    const Shape4 os = conv2d_out_shape(x.shape, spec);
    TensorT<T> out(os);
    const int cg = spec.weight.shape.c;
    const int co_per_g = os.c / spec.groups;
    const int kh = spec.weight.shape.h, kw = spec.weight.shape.w;

    for (int n = 0; n < os.n; ++n)
        for (int oc = 0; oc < os.c; ++oc)
            for (int oh = 0; oh < os.h; ++oh)
                for (int ow = 0; ow < os.w; ++ow) {
                    double acc = spec.bias.empty() ? 0.0 : double(spec.bias[oc]);
                    const int ic0 = (oc / co_per_g) * cg;
                    for (int ic = 0; ic < cg; ++ic)
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v) {
                                const int ih = oh * spec.stride_h - spec.pad_h + u * spec.dil_h;
                                const int iw = ow * spec.stride_w - spec.pad_w + v * spec.dil_w;
                                if (ih < 0 || ih >= x.shape.h || iw < 0 || iw >= x.shape.w)
                                    continue;  // zero padding
                                acc += double(x.at(n, ic0 + ic, ih, iw)) *
                                       double(spec.weight.at(oc, ic, u, v));
                            }
                    out.at(n, oc, oh, ow) = T(acc);
                }
    return out;
}

double apply_act_scalar(double v, Act kind, double param) {
    switch (kind) {
        case Act::relu: return v > 0.0 ? v : 0.0;
        case Act::leaky_relu: return v > 0.0 ? v : param * v;
        case Act::silu: return v / (1.0 + std::exp(-v));
        case Act::gelu: return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
        case Act::sigmoid: return 1.0 / (1.0 + std::exp(-v));
        case Act::shifted_sigmoid: return 1.0 / (1.0 + std::exp(-v)) + param;
    }
    fail("activation: unknown kind");
}

const char* act_name(Act kind) {
    switch (kind) {
        case Act::relu: return "relu";
        case Act::leaky_relu: return "leaky_relu";
        case Act::silu: return "silu";
        case Act::gelu: return "gelu";
        case Act::sigmoid: return "sigmoid";
        case Act::shifted_sigmoid: return "shifted_sigmoid";
    }
    fail("activation: unknown kind");
}

std::optional<Act> act_from_name(const std::string& name) {
    for (Act k : {Act::relu, Act::leaky_relu, Act::silu, Act::gelu, Act::sigmoid,
                  Act::shifted_sigmoid})
        if (name == act_name(k)) return k;
    return std::nullopt;
}

template <typename T>
TensorT<T> activation(const TensorT<T>& x, Act kind, double param) {
    TensorT<T> out(x.shape);
    const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        out.data[i] = T(apply_act_scalar(double(x.data[i]), kind, param));
    return out;
}

template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r) {
    require(r >= 1, "pixel_shuffle: factor must be >= 1, got " + std::to_string(r));
    require(x.shape.c % (r * r) == 0, "pixel_shuffle: channels " + std::to_string(x.shape.c) +
                                          " not divisible by r^2 = " + std::to_string(r * r));
    TensorT<T> out(x.shape.n, x.shape.c / (r * r), x.shape.h * r, x.shape.w * r);
    for (int n = 0; n < out.shape.n; ++n)
        for (int c = 0; c < out.shape.c; ++c)
            for (int oh = 0; oh < out.shape.h; ++oh)
                for (int ow = 0; ow < out.shape.w; ++ow)
                    out.at(n, c, oh, ow) =
                        x.at(n, c * r * r + (oh % r) * r + (ow % r), oh / r, ow / r);
    return out;
}

template <typename T>
TensorT<T> pixel_unshuffle(const TensorT<T>& x, int r) {
    require(r >= 1, "pixel_unshuffle: factor must be >= 1, got " + std::to_string(r));
    require(x.shape.h % r == 0 && x.shape.w % r == 0,
            "pixel_unshuffle: spatial dims " + std::to_string(x.shape.h) + "x" +
                std::to_string(x.shape.w) + " not divisible by r = " + std::to_string(r));
    TensorT<T> out(x.shape.n, x.shape.c * r * r, x.shape.h / r, x.shape.w / r);
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = 0; c < x.shape.c; ++c)
            for (int h = 0; h < x.shape.h; ++h)
                for (int w = 0; w < x.shape.w; ++w)
                    out.at(n, c * r * r + (h % r) * r + (w % r), h / r, w / r) = x.at(n, c, h, w);
    return out;
}

template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int out_h, int out_w) {
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: target size " + std::to_string(out_h) +
                                          "x" + std::to_string(out_w) + " must be positive");
    TensorT<T> out(x.shape.n, x.shape.c, out_h, out_w);
    const double sh = double(x.shape.h) / out_h;
    const double sw = double(x.shape.w) / out_w;
    for (int n = 0; n < out.shape.n; ++n)
        for (int c = 0; c < out.shape.c; ++c)
            for (int oh = 0; oh < out_h; ++oh) {
                double fy = (oh + 0.5) * sh - 0.5;
                fy = std::clamp(fy, 0.0, double(x.shape.h - 1));
                const int y0 = int(fy);
                const int y1 = std::min(y0 + 1, x.shape.h - 1);
                const double wy = fy - y0;
                for (int ow = 0; ow < out_w; ++ow) {
                    double fx = (ow + 0.5) * sw - 0.5;
                    fx = std::clamp(fx, 0.0, double(x.shape.w - 1));
                    const int x0 = int(fx);
                    const int x1 = std::min(x0 + 1, x.shape.w - 1);
                    const double wx = fx - x0;
                    const double top = (1.0 - wx) * double(x.at(n, c, y0, x0)) +
                                       wx * double(x.at(n, c, y0, x1));
                    const double bot = (1.0 - wx) * double(x.at(n, c, y1, x0)) +
                                       wx * double(x.at(n, c, y1, x1));
                    out.at(n, c, oh, ow) = T((1.0 - wy) * top + wy * bot);
                }
            }
    return out;
}

template <typename T>
TensorT<T> upsample(const TensorT<T>& x, int r, Resize mode) {
    require(r >= 1, "upsample: factor must be >= 1, got " + std::to_string(r));
    if (mode == Resize::bilinear) return bilinear_resize(x, x.shape.h * r, x.shape.w * r);
    TensorT<T> out(x.shape.n, x.shape.c, x.shape.h * r, x.shape.w * r);
    for (int n = 0; n < out.shape.n; ++n)
        for (int c = 0; c < out.shape.c; ++c)
            for (int oh = 0; oh < out.shape.h; ++oh)
                for (int ow = 0; ow < out.shape.w; ++ow)
                    out.at(n, c, oh, ow) = x.at(n, c, oh / r, ow / r);
    return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    require(a.shape == b.shape, "add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    TensorT<T> out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    require(a.shape == b.shape, "mul: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    TensorT<T> out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

template <typename T>
TensorT<T> channel_slice(const TensorT<T>& x, int c_begin, int c_end) {
    require(0 <= c_begin && c_begin < c_end && c_end <= x.shape.c,
            "channel_slice: range [" + std::to_string(c_begin) + "," + std::to_string(c_end) +
                ") invalid for " + std::to_string(x.shape.c) + " channels");
    TensorT<T> out(x.shape.n, c_end - c_begin, x.shape.h, x.shape.w);
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = c_begin; c < c_end; ++c)
            std::copy_n(&x.at(n, c, 0, 0), std::size_t(x.shape.h) * x.shape.w,
                        &out.at(n, c - c_begin, 0, 0));
    return out;
}

template <typename T>
std::vector<TensorT<T>> channel_split(const TensorT<T>& x, const std::vector<int>& sizes) {
    int total = 0;
    for (int s : sizes) {
        require(s >= 1, "channel_split: split sizes must be positive");
        total += s;
    }
    require(total == x.shape.c, "channel_split: sizes sum to " + std::to_string(total) +
                                    " but input has " + std::to_string(x.shape.c) + " channels");
    std::vector<TensorT<T>> parts;
    int c0 = 0;
    for (int s : sizes) {
        parts.push_back(channel_slice(x, c0, c0 + s));
        c0 += s;
    }
    return parts;
}

template <typename T>
TensorT<T> channel_concat(const std::vector<TensorT<T>>& parts) {
    require(!parts.empty(), "channel_concat: no inputs");
    int c = 0;
    for (const auto& p : parts) {
        require(p.shape.n == parts[0].shape.n && p.shape.h == parts[0].shape.h &&
                    p.shape.w == parts[0].shape.w,
                "channel_concat: shape mismatch " + p.shape.str() + " vs " +
                    parts[0].shape.str());
        c += p.shape.c;
    }
    TensorT<T> out(parts[0].shape.n, c, parts[0].shape.h, parts[0].shape.w);
    int c0 = 0;
    for (const auto& p : parts) {
        for (int n = 0; n < p.shape.n; ++n)
            for (int pc = 0; pc < p.shape.c; ++pc)
                std::copy_n(&p.at(n, pc, 0, 0), std::size_t(p.shape.h) * p.shape.w,
                            &out.at(n, c0 + pc, 0, 0));
        c0 += p.shape.c;
    }
    return out;
}

template <typename T>
TensorT<T> maxpool(const TensorT<T>& x, int k, int stride) {
    require(k >= 1 && stride >= 1, "maxpool: window " + std::to_string(k) + " and stride " +
                                       std::to_string(stride) + " must be >= 1");
    require(x.shape.h >= k && x.shape.w >= k,
            "maxpool: input " + std::to_string(x.shape.h) + "x" + std::to_string(x.shape.w) +
                " is smaller than the window " + std::to_string(k));
    const int oh = (x.shape.h - k) / stride + 1;
    const int ow = (x.shape.w - k) / stride + 1;
    TensorT<T> out(x.shape.n, x.shape.c, oh, ow);
    for (int n = 0; n < out.shape.n; ++n)
        for (int c = 0; c < out.shape.c; ++c)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    T m = x.at(n, c, i * stride, j * stride);
                    for (int u = 0; u < k; ++u)
                        for (int v = 0; v < k; ++v)
                            m = std::max(m, x.at(n, c, i * stride + u, j * stride + v));
                    out.at(n, c, i, j) = m;
                }
    return out;
}

template <typename T>
TensorT<T> pad2d(const TensorT<T>& x, int ph, int pw) {
    require(ph >= 0 && pw >= 0, "pad2d: padding must be >= 0, got " + std::to_string(ph) + "x" +
                                    std::to_string(pw));
    TensorT<T> out(x.shape.n, x.shape.c, x.shape.h + 2 * ph, x.shape.w + 2 * pw);
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = 0; c < x.shape.c; ++c)
            for (int h = 0; h < x.shape.h; ++h)
                std::copy_n(&x.at(n, c, h, 0), std::size_t(x.shape.w),
                            &out.at(n, c, h + ph, pw));
    return out;
}

#define ESRKIT_INSTANTIATE_OPS(T)                                                         \
    template Shape4 conv2d_out_shape<T>(const Shape4&, const ConvSpecT<T>&);              \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const ConvSpecT<T>&);                \
    template TensorT<T> conv2d_oracle<T>(const TensorT<T>&, const ConvSpecT<T>&);         \
    template TensorT<T> activation<T>(const TensorT<T>&, Act, double);                    \
    template TensorT<T> pixel_shuffle<T>(const TensorT<T>&, int);                         \
    template TensorT<T> pixel_unshuffle<T>(const TensorT<T>&, int);                       \
    template TensorT<T> upsample<T>(const TensorT<T>&, int, Resize);                      \
    template TensorT<T> bilinear_resize<T>(const TensorT<T>&, int, int);                  \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                     \
    template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                     \
    template std::vector<TensorT<T>> channel_split<T>(const TensorT<T>&,                  \
                                                      const std::vector<int>&);           \
    template TensorT<T> channel_concat<T>(const std::vector<TensorT<T>>&);                \
    template TensorT<T> channel_slice<T>(const TensorT<T>&, int, int);                    \
    template TensorT<T> maxpool<T>(const TensorT<T>&, int, int);                          \
    template TensorT<T> pad2d<T>(const TensorT<T>&, int, int);

ESRKIT_INSTANTIATE_OPS(float)
ESRKIT_INSTANTIATE_OPS(double)
#undef ESRKIT_INSTANTIATE_OPS

}  // namespace esrkit
