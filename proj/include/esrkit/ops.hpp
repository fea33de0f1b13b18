#pragma once

#include <optional>
#include <utility>

#include "esrkit/tensor.hpp"

namespace esrkit {

// Convolution here is cross-correlation (no kernel flip), zero padding,
// weight layout (C_out, C_in/groups, kH, kW). Accumulation is always done
// in 64-bit per output element and cast to the storage type on write; the
// per-element summation order is fixed (bias, then ic, kh, kw), so results
// are bitwise reproducible for any thread count.
template <typename T>
struct ConvSpecT {
    TensorT<T> weight;    // (C_out, C_in/groups, kH, kW)
    std::vector<T> bias;  // empty = no bias, else length C_out
    int stride_h = 1, stride_w = 1;
    int pad_h = 0, pad_w = 0;
    int dil_h = 1, dil_w = 1;
    int groups = 1;

    int out_channels() const { return weight.shape.n; }
    int in_channels() const { return weight.shape.c * groups; }
    int kh() const { return weight.shape.h; }
    int kw() const { return weight.shape.w; }
    bool has_bias() const { return !bias.empty(); }
};

using ConvSpec = ConvSpecT<float>;
using DConvSpec = ConvSpecT<double>;

// Same zero padding for an odd k so spatial dims are preserved at stride 1.
inline int same_pad(int k) {
    require(k >= 1 && k % 2 == 1, "same_pad: kernel size " + std::to_string(k) + " must be odd");
    return (k - 1) / 2;
}

template <typename T>
ConvSpecT<T> make_conv(int c_out, int c_in, int kh, int kw, bool with_bias = true,
                       int stride = 1, int pad = 0, int dil = 1, int groups = 1) {
    ConvSpecT<T> s;
    require(groups >= 1 && c_in % groups == 0,
            "make_conv: groups " + std::to_string(groups) + " must divide input channels " +
                std::to_string(c_in));
    s.weight = TensorT<T>(c_out, c_in / groups, kh, kw);
    if (with_bias) s.bias.assign(static_cast<std::size_t>(c_out), T(0));
    s.stride_h = s.stride_w = stride;
    s.pad_h = s.pad_w = pad;
    s.dil_h = s.dil_w = dil;
    s.groups = groups;
    return s;
}

// Validates input/spec compatibility and returns the output shape.
template <typename T>
Shape4 conv2d_out_shape(const Shape4& x, const ConvSpecT<T>& spec);

// Parallel engine kernel (OpenMP over output rows).
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvSpecT<T>& spec);

// Serial reference: the straightforward seven-loop form, kept as the
// ground truth the engine kernel is tested against.
template <typename T>
TensorT<T> conv2d_oracle(const TensorT<T>& x, const ConvSpecT<T>& spec);

enum class Act { relu, leaky_relu, silu, gelu, sigmoid, shifted_sigmoid };

inline double act_default_param(Act kind) {
    switch (kind) {
        case Act::leaky_relu: return 0.01;
        case Act::shifted_sigmoid: return -0.5;
        default: return 0.0;
    }
}

// `param` is the leak slope for leaky_relu and the additive shift for
// shifted_sigmoid (default -0.5 centres the gate around zero); it is
// ignored by the other kinds. gelu is the exact erf form.
template <typename T>
TensorT<T> activation(const TensorT<T>& x, Act kind, double param);

template <typename T>
TensorT<T> activation(const TensorT<T>& x, Act kind) {
    return activation(x, kind, act_default_param(kind));
}

double apply_act_scalar(double v, Act kind, double param);

const char* act_name(Act kind);
std::optional<Act> act_from_name(const std::string& name);

// (n, c*r^2, h, w) -> (n, c, h*r, w*r); inverse below. r >= 1.
template <typename T>
TensorT<T> pixel_shuffle(const TensorT<T>& x, int r);
template <typename T>
TensorT<T> pixel_unshuffle(const TensorT<T>& x, int r);

enum class Resize { nearest, bilinear };

// Integer-factor upsampling; bilinear uses half-pixel centres
// (align_corners = false) with edge clamping.
template <typename T>
TensorT<T> upsample(const TensorT<T>& x, int r, Resize mode);

// Arbitrary-size bilinear resize, same coordinate convention.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int out_h, int out_w);

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
std::vector<TensorT<T>> channel_split(const TensorT<T>& x, const std::vector<int>& sizes);
template <typename T>
TensorT<T> channel_concat(const std::vector<TensorT<T>>& parts);
template <typename T>
TensorT<T> channel_slice(const TensorT<T>& x, int c_begin, int c_end);

// Valid (unpadded) max pooling.
template <typename T>
TensorT<T> maxpool(const TensorT<T>& x, int k, int stride);

// Zero padding of ph rows / pw columns on each side.
template <typename T>
TensorT<T> pad2d(const TensorT<T>& x, int ph, int pw);

#define ESRKIT_EXTERN_OPS(T)                                                              \
    extern template Shape4 conv2d_out_shape<T>(const Shape4&, const ConvSpecT<T>&);      \
    extern template TensorT<T> conv2d<T>(const TensorT<T>&, const ConvSpecT<T>&);        \
    extern template TensorT<T> conv2d_oracle<T>(const TensorT<T>&, const ConvSpecT<T>&); \
    extern template TensorT<T> activation<T>(const TensorT<T>&, Act, double);            \
    extern template TensorT<T> pixel_shuffle<T>(const TensorT<T>&, int);                 \
    extern template TensorT<T> pixel_unshuffle<T>(const TensorT<T>&, int);               \
    extern template TensorT<T> upsample<T>(const TensorT<T>&, int, Resize);              \
    extern template TensorT<T> bilinear_resize<T>(const TensorT<T>&, int, int);          \
    extern template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);             \
    extern template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);             \
    extern template std::vector<TensorT<T>> channel_split<T>(const TensorT<T>&,          \
                                                             const std::vector<int>&);   \
    extern template TensorT<T> channel_concat<T>(const std::vector<TensorT<T>>&);        \
    extern template TensorT<T> channel_slice<T>(const TensorT<T>&, int, int);            \
    extern template TensorT<T> maxpool<T>(const TensorT<T>&, int, int);                  \
    extern template TensorT<T> pad2d<T>(const TensorT<T>&, int, int);

ESRKIT_EXTERN_OPS(float)
ESRKIT_EXTERN_OPS(double)
#undef ESRKIT_EXTERN_OPS

}  // namespace esrkit
