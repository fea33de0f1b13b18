#pragma once

#include "esrkit/tensor.hpp"

namespace esrkit {

// Fidelity is measured on all channels jointly after discarding a border
// of `shave` pixels on every side. In eight-bit mode values live in
// [0, 255], are quantized (round half away from zero, clamped) before the
// squared error, and the peak is 255; in continuous mode values live in
// [0, 1], unquantized, peak 1. Identical interiors give +infinity.
enum class PsnrMode { eight_bit, continuous };

struct PsnrOptions {
    int shave = 4;
    PsnrMode mode = PsnrMode::eight_bit;
};

double psnr(const Tensor& sr, const Tensor& hr, const PsnrOptions& opts = {});

double l1_loss(const Tensor& a, const Tensor& b);
double mse_loss(const Tensor& a, const Tensor& b);

// mean sqrt(diff^2 + eps^2); equals eps at exact equality.
double charbonnier_loss(const Tensor& a, const Tensor& b, double eps = 1e-3);

// Unnormalized 2-D DFT of a row-major (h, w) plane; returns (re, im).
// Parseval under this convention: sum |X|^2 = h*w * sum x^2.
std::pair<std::vector<double>, std::vector<double>> dft2d(const std::vector<double>& x, int h,
                                                          int w);

// Orthonormal DCT-II (1-D and separable 2-D); energy preserving.
std::vector<double> dct1d(const std::vector<double>& x);
std::vector<double> dct2d(const std::vector<double>& x, int h, int w);

// Pixel L1 plus lambda times the mean absolute difference of the DFT
// coefficients, real and imaginary parts concatenated.
double fft_freq_loss(const Tensor& sr, const Tensor& hr, double lambda = 0.1);

// Mean absolute difference of orthonormal DCT-II coefficients.
double dct_loss(const Tensor& a, const Tensor& b);

// Box mean with border-clamped windows (each output averages only the
// in-bounds taps), so constants are fixed points.
Tensor box_blur(const Tensor& x, int k = 3);

// L1 between high-pass residuals (img - box_blur(img)).
double edge_loss(const Tensor& a, const Tensor& b, int blur_k = 3);

// Affinity distillation: per layer, flatten features to (C, H*W), L2
// normalize the channel rows, form the (H*W, H*W) Gram matrix, and take
// the mean L1 between student and teacher Grams, averaged over layers (and
// batch items). Row normalization makes it invariant to per-layer feature
// scaling. Layers may differ in channel count but must share n, h*w.
double affinity_distill_loss(const std::vector<Tensor>& student,
                             const std::vector<Tensor>& teacher);

// Output-matching distillation term; plain pixel L1.
double pixel_distill_loss(const Tensor& teacher_out, const Tensor& student_out);

// w_rec * mse(student, hr) + w_pix * l1(student, teacher)
//   + w_aff * affinity(student_feats, teacher_feats)
double distill_total_loss(const Tensor& hr, const Tensor& student_out,
                          const Tensor& teacher_out, const std::vector<Tensor>& student_feats,
                          const std::vector<Tensor>& teacher_feats, double w_rec = 1.0,
                          double w_pix = 1.0, double w_aff = 1.0);

}  // namespace esrkit
