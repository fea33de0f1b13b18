#include "esrkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace esrkit {

namespace {

const double kPi = 3.14159265358979323846;

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& ctx) {
    require(a.shape == b.shape,
            ctx + ": shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    require(a.numel() > 0, ctx + ": empty tensors " + a.shape.str());
}

double quantize_8bit(double v) {
    return std::clamp(std::round(v), 0.0, 255.0);  // round halves away from zero
}

}  // namespace

double psnr(const Tensor& sr, const Tensor& hr, const PsnrOptions& opts) {
    check_same_shape(sr, hr, "psnr");
    require(opts.shave >= 0, "psnr: shave must be >= 0, got " + std::to_string(opts.shave));
    const int h = sr.shape.h, w = sr.shape.w;
    require(h > 2 * opts.shave && w > 2 * opts.shave,
            "psnr: interior is empty, image " + std::to_string(h) + "x" + std::to_string(w) +
                " with shave " + std::to_string(opts.shave));

    const bool q = opts.mode == PsnrMode::eight_bit;
    double se = 0.0;
    std::int64_t count = 0;
    for (int n = 0; n < sr.shape.n; ++n)
        for (int c = 0; c < sr.shape.c; ++c)
            for (int i = opts.shave; i < h - opts.shave; ++i)
                for (int j = opts.shave; j < w - opts.shave; ++j) {
                    double a = double(sr.at(n, c, i, j));
                    double b = double(hr.at(n, c, i, j));
                    if (q) {
                        a = quantize_8bit(a);
                        b = quantize_8bit(b);
                    }
                    se += (a - b) * (a - b);
                    ++count;
                }
    const double mse = se / double(count);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    const double peak = q ? 255.0 : 1.0;
    return 10.0 * std::log10(peak * peak / mse);
}

double l1_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "l1_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        s += std::abs(double(a.data[i]) - double(b.data[i]));
    return s / double(a.numel());
}

double mse_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        s += d * d;
    }
    return s / double(a.numel());
}

double charbonnier_loss(const Tensor& a, const Tensor& b, double eps) {
    check_same_shape(a, b, "charbonnier_loss");
    require(eps >= 0.0, "charbonnier_loss: eps must be >= 0");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        s += std::sqrt(d * d + eps * eps);
    }
    return s / double(a.numel());
}

std::pair<std::vector<double>, std::vector<double>> dft2d(const std::vector<double>& x, int h,
                                                          int w) {
    require(h >= 1 && w >= 1 && int(x.size()) == h * w,
            "dft2d: buffer size " + std::to_string(x.size()) + " does not match " +
                std::to_string(h) + "x" + std::to_string(w));
    const double tau = 2.0 * kPi;

    // Rows first, then columns.
    std::vector<double> rre(std::size_t(h) * w, 0.0), rim(std::size_t(h) * w, 0.0);
    for (int i = 0; i < h; ++i)
        for (int v = 0; v < w; ++v) {
            double re = 0.0, im = 0.0;
            for (int j = 0; j < w; ++j) {
                const double ang = -tau * double(v) * double(j) / double(w);
                const double val = x[std::size_t(i) * w + j];
                re += val * std::cos(ang);
                im += val * std::sin(ang);
            }
            rre[std::size_t(i) * w + v] = re;
            rim[std::size_t(i) * w + v] = im;
        }

    std::vector<double> ore(std::size_t(h) * w, 0.0), oim(std::size_t(h) * w, 0.0);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < h; ++i) {
                const double ang = -tau * double(u) * double(i) / double(h);
                const double c = std::cos(ang), s = std::sin(ang);
                const double a = rre[std::size_t(i) * w + v];
                const double b = rim[std::size_t(i) * w + v];
                re += a * c - b * s;
                im += a * s + b * c;
            }
            ore[std::size_t(u) * w + v] = re;
            oim[std::size_t(u) * w + v] = im;
        }
    return {std::move(ore), std::move(oim)};
}

std::vector<double> dct1d(const std::vector<double>& x) {
    const int n = int(x.size());
    require(n >= 1, "dct1d: empty input");
    std::vector<double> out(std::size_t(n), 0.0);
    for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            s += x[std::size_t(i)] * std::cos(kPi / double(n) * (double(i) + 0.5) * double(k));
        const double norm = k == 0 ? std::sqrt(1.0 / double(n)) : std::sqrt(2.0 / double(n));
        out[std::size_t(k)] = s * norm;
    }
    return out;
}

std::vector<double> dct2d(const std::vector<double>& x, int h, int w) {
    require(h >= 1 && w >= 1 && int(x.size()) == h * w,
            "dct2d: buffer size " + std::to_string(x.size()) + " does not match " +
                std::to_string(h) + "x" + std::to_string(w));
    std::vector<double> rows(std::size_t(h) * w, 0.0);
    std::vector<double> tmp(std::size_t(w), 0.0);
    for (int i = 0; i < h; ++i) {
        std::copy_n(x.begin() + std::size_t(i) * w, std::size_t(w), tmp.begin());
        const std::vector<double> t = dct1d(tmp);
        std::copy_n(t.begin(), std::size_t(w), rows.begin() + std::size_t(i) * w);
    }
    std::vector<double> out(std::size_t(h) * w, 0.0);
    std::vector<double> col(std::size_t(h), 0.0);
    for (int j = 0; j < w; ++j) {
        for (int i = 0; i < h; ++i) col[std::size_t(i)] = rows[std::size_t(i) * w + j];
        const std::vector<double> t = dct1d(col);
        for (int i = 0; i < h; ++i) out[std::size_t(i) * w + j] = t[std::size_t(i)];
    }
    return out;
}

namespace {

std::vector<double> plane_of(const Tensor& t, int n, int c) {
    std::vector<double> p(std::size_t(t.shape.h) * t.shape.w);
    for (int i = 0; i < t.shape.h; ++i)
        for (int j = 0; j < t.shape.w; ++j)
            p[std::size_t(i) * t.shape.w + j] = double(t.at(n, c, i, j));
    return p;
}

}  // namespace

double fft_freq_loss(const Tensor& sr, const Tensor& hr, double lambda) {
    check_same_shape(sr, hr, "fft_freq_loss");
    require(lambda >= 0.0, "fft_freq_loss: lambda must be >= 0");
    const double pixel = l1_loss(sr, hr);
    if (lambda == 0.0) return pixel;

    double abs_sum = 0.0;
    for (int n = 0; n < sr.shape.n; ++n)
        for (int c = 0; c < sr.shape.c; ++c) {
            const auto [are, aim] = dft2d(plane_of(sr, n, c), sr.shape.h, sr.shape.w);
            const auto [bre, bim] = dft2d(plane_of(hr, n, c), hr.shape.h, hr.shape.w);
            for (std::size_t i = 0; i < are.size(); ++i) {
                abs_sum += std::abs(are[i] - bre[i]);
                abs_sum += std::abs(aim[i] - bim[i]);
            }
        }
    const double freq = abs_sum / double(2 * sr.numel());
    return pixel + lambda * freq;
}

double dct_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dct_loss");
    double s = 0.0;
    for (int n = 0; n < a.shape.n; ++n)
        for (int c = 0; c < a.shape.c; ++c) {
            const auto ta = dct2d(plane_of(a, n, c), a.shape.h, a.shape.w);
            const auto tb = dct2d(plane_of(b, n, c), b.shape.h, b.shape.w);
            for (std::size_t i = 0; i < ta.size(); ++i) s += std::abs(ta[i] - tb[i]);
        }
    return s / double(a.numel());
}

Tensor box_blur(const Tensor& x, int k) {
    require(k >= 1 && k % 2 == 1, "box_blur: window " + std::to_string(k) + " must be odd");
    const int r = k / 2;
    Tensor out(x.shape);
    for (int n = 0; n < x.shape.n; ++n)
        for (int c = 0; c < x.shape.c; ++c)
            for (int i = 0; i < x.shape.h; ++i)
                for (int j = 0; j < x.shape.w; ++j) {
                    double s = 0.0;
                    int cnt = 0;
                    for (int u = std::max(0, i - r); u <= std::min(x.shape.h - 1, i + r); ++u)
                        for (int v = std::max(0, j - r); v <= std::min(x.shape.w - 1, j + r);
                             ++v) {
                            s += double(x.at(n, c, u, v));
                            ++cnt;
                        }
                    out.at(n, c, i, j) = float(s / double(cnt));
                }
    return out;
}

double edge_loss(const Tensor& a, const Tensor& b, int blur_k) {
    check_same_shape(a, b, "edge_loss");
    const Tensor ha = box_blur(a, blur_k);
    const Tensor hb = box_blur(b, blur_k);
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double ea = double(a.data[i]) - double(ha.data[i]);
        const double eb = double(b.data[i]) - double(hb.data[i]);
        s += std::abs(ea - eb);
    }
    return s / double(a.numel());
}

namespace {

// (H*W, H*W) Gram of the channel-row-normalized feature matrix, one batch
// item. Zero channels normalize to zero.
std::vector<double> affinity_gram(const Tensor& f, int n) {
    const int c = f.shape.c;
    const std::int64_t hw = std::int64_t(f.shape.h) * f.shape.w;
    std::vector<double> rows(std::size_t(c) * hw);
    for (int ch = 0; ch < c; ++ch) {
        double norm2 = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) {
            const double v = double(
                f.data[std::size_t(f.index(n, ch, 0, 0) + p)]);
            rows[std::size_t(ch) * hw + std::size_t(p)] = v;
            norm2 += v * v;
        }
        if (norm2 > 0.0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::int64_t p = 0; p < hw; ++p)
                rows[std::size_t(ch) * hw + std::size_t(p)] *= inv;
        }
    }
    std::vector<double> gram(std::size_t(hw) * std::size_t(hw), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* row = rows.data() + std::size_t(ch) * hw;
        for (std::int64_t p = 0; p < hw; ++p)
            for (std::int64_t q = 0; q < hw; ++q)
                gram[std::size_t(p) * std::size_t(hw) + std::size_t(q)] += row[p] * row[q];
    }
    return gram;
}

}  // namespace

double affinity_distill_loss(const std::vector<Tensor>& student,
                             const std::vector<Tensor>& teacher) {
    require(!student.empty(), "affinity_distill_loss: no feature layers");
    require(student.size() == teacher.size(),
            "affinity_distill_loss: student has " + std::to_string(student.size()) +
                " layers, teacher has " + std::to_string(teacher.size()));
    double total = 0.0;
    for (std::size_t l = 0; l < student.size(); ++l) {
        const Tensor& s = student[l];
        const Tensor& t = teacher[l];
        require(s.shape.n == t.shape.n,
                "affinity_distill_loss: layer " + std::to_string(l) + " batch mismatch");
        const std::int64_t hw_s = std::int64_t(s.shape.h) * s.shape.w;
        const std::int64_t hw_t = std::int64_t(t.shape.h) * t.shape.w;
        require(hw_s == hw_t, "affinity_distill_loss: layer " + std::to_string(l) +
                                  " spatial size mismatch (" + std::to_string(hw_s) + " vs " +
                                  std::to_string(hw_t) + ")");
        require(s.shape.n >= 1 && hw_s >= 1,
                "affinity_distill_loss: layer " + std::to_string(l) + " is empty");

        double layer = 0.0;
        for (int n = 0; n < s.shape.n; ++n) {
            const auto gs = affinity_gram(s, n);
            const auto gt = affinity_gram(t, n);
            double d = 0.0;
            for (std::size_t i = 0; i < gs.size(); ++i) d += std::abs(gs[i] - gt[i]);
            layer += d / double(gs.size());
        }
        total += layer / double(s.shape.n);
    }
    return total / double(student.size());
}

double pixel_distill_loss(const Tensor& teacher_out, const Tensor& student_out) {
    return l1_loss(teacher_out, student_out);
}

double distill_total_loss(const Tensor& hr, const Tensor& student_out,
                          const Tensor& teacher_out, const std::vector<Tensor>& student_feats,
                          const std::vector<Tensor>& teacher_feats, double w_rec, double w_pix,
                          double w_aff) {
    return w_rec * mse_loss(student_out, hr) +
           w_pix * pixel_distill_loss(teacher_out, student_out) +
           w_aff * affinity_distill_loss(student_feats, teacher_feats);
}

}  // namespace esrkit
