#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "esrkit/metrics.hpp"

using namespace esrkit;

namespace {

constexpr double kTau = 6.283185307179586476925;

// Brute-force DFT straight from the definition, quadratic in pixel count.
void dft_reference(const std::vector<double>& x, int h, int w, std::vector<double>& re,
                   std::vector<double>& im) {
    re.assign(std::size_t(h) * w, 0.0);
    im.assign(std::size_t(h) * w, 0.0);
    for (int k = 0; k < h; ++k)
        for (int l = 0; l < w; ++l) {
            double sr = 0.0, si = 0.0;
            for (int m = 0; m < h; ++m)
                for (int n = 0; n < w; ++n) {
                    const double ang = -kTau * (double(k) * m / h + double(l) * n / w);
                    sr += x[std::size_t(m) * w + n] * std::cos(ang);
                    si += x[std::size_t(m) * w + n] * std::sin(ang);
                }
            re[std::size_t(k) * w + l] = sr;
            im[std::size_t(k) * w + l] = si;
        }
}

// Orthonormal DCT-II straight from the definition.
std::vector<double> dct2_reference(const std::vector<double>& x, int h, int w) {
    std::vector<double> out(std::size_t(h) * w, 0.0);
    const double pi = kTau / 2.0;
    for (int k = 0; k < h; ++k)
        for (int l = 0; l < w; ++l) {
            double s = 0.0;
            for (int m = 0; m < h; ++m)
                for (int n = 0; n < w; ++n)
                    s += x[std::size_t(m) * w + n] *
                         std::cos(pi * (m + 0.5) * k / h) * std::cos(pi * (n + 0.5) * l / w);
            const double ck = k == 0 ? std::sqrt(1.0 / h) : std::sqrt(2.0 / h);
            const double cl = l == 0 ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w);
            out[std::size_t(k) * w + l] = ck * cl * s;
        }
    return out;
}

Tensor rand_tensor(Shape4 s, std::uint32_t seed, double lo = 0.0, double hi = 1.0) {
    Tensor t(s.n, s.c, s.h, s.w);
    fill_uniform(t, seed, lo, hi);
    return t;
}

}  // namespace

TEST_CASE("psnr protocol anchors") {
    SUBCASE("identical images give infinity") {
        const Tensor a = rand_tensor({1, 3, 16, 16}, 1u, 0.0, 255.0);
        CHECK(std::isinf(psnr(a, a)));
    }
    SUBCASE("all-zero vs all-255 gives exactly 0 dB") {
        const Tensor a = Tensor::zeros({1, 3, 16, 16});
        const Tensor b = Tensor::full({1, 3, 16, 16}, 255.0f);
        CHECK(psnr(a, b) == 0.0);
    }
    SUBCASE("unit offset gives the 48.13 dB ceiling") {
        Tensor a(1, 3, 16, 16);
        fill_uniform(a, 2u, 10.0, 200.0);
        for (auto& v : a.data) v = std::round(v);
        Tensor b = a;
        for (auto& v : b.data) v += 1.0f;
        CHECK(psnr(a, b) == doctest::Approx(48.130803609).epsilon(1e-9));
    }
    SUBCASE("corruption confined to the shaved border is invisible") {
        Tensor a = rand_tensor({1, 3, 20, 20}, 3u, 0.0, 255.0);
        Tensor b = a;
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 20; ++i)
                for (int j = 0; j < 20; ++j)
                    if (i < 4 || i >= 16 || j < 4 || j >= 16) b.at(0, c, i, j) = 0.0f;
        CHECK(std::isinf(psnr(a, b)));
        PsnrOptions noshave;
        noshave.shave = 0;
        CHECK(!std::isinf(psnr(a, b, noshave)));
    }
    SUBCASE("quantization happens before the error") {
        const Tensor a = Tensor::full({1, 1, 10, 10}, 100.2f);
        const Tensor b = Tensor::full({1, 1, 10, 10}, 100.4f);
        CHECK(std::isinf(psnr(a, b)));  // both quantize to 100
        PsnrOptions cont;
        cont.mode = PsnrMode::continuous;
        CHECK(!std::isinf(psnr(a, b, cont)));
    }
    SUBCASE("psnr decreases as the offset grows") {
        const Tensor base = Tensor::full({1, 1, 12, 12}, 64.0f);
        double prev = 1e9;
        for (float off : {1.0f, 2.0f, 4.0f, 8.0f}) {
            Tensor shifted = base;
            for (auto& v : shifted.data) v += off;
            const double v = psnr(base, shifted);
            CHECK(v < prev);
            prev = v;
        }
        // closed form: 20 log10(255 / off)
        Tensor shifted = base;
        for (auto& v : shifted.data) v += 8.0f;
        CHECK(psnr(base, shifted) == doctest::Approx(20.0 * std::log10(255.0 / 8.0)));
    }
    SUBCASE("interior must be non-empty") {
        const Tensor a = Tensor::zeros({1, 1, 8, 8});
        CHECK_THROWS(psnr(a, a));  // 8 - 2*4 = 0
    }
}

TEST_CASE("elementary losses vanish at equality") {
    const Tensor a = rand_tensor({2, 3, 6, 6}, 4u, -1.0, 1.0);
    CHECK(l1_loss(a, a) == 0.0);
    CHECK(mse_loss(a, a) == 0.0);
    CHECK(charbonnier_loss(a, a) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(fft_freq_loss(a, a) == 0.0);
    CHECK(dct_loss(a, a) == 0.0);
    CHECK(edge_loss(a, a) == 0.0);
}

TEST_CASE("l1 and mse closed forms") {
    Tensor a = Tensor::zeros({1, 1, 2, 2});
    Tensor b(1, 1, 2, 2);
    b.data = {1.0f, -1.0f, 3.0f, -3.0f};
    CHECK(l1_loss(a, b) == doctest::Approx(2.0));
    CHECK(mse_loss(a, b) == doctest::Approx(5.0));
    CHECK(charbonnier_loss(a, b, 0.0) == doctest::Approx(2.0));  // degenerates to L1
}

TEST_CASE("fft loss matches the brute-force spectrum on 4x4 inputs") {
    std::mt19937 rng(20u);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = rand_tensor({1, 2, 4, 4}, rng(), -1.0, 1.0);
        const Tensor b = rand_tensor({1, 2, 4, 4}, rng(), -1.0, 1.0);

        double l1 = 0.0;
        for (std::size_t i = 0; i < a.data.size(); ++i)
            l1 += std::abs(double(a.data[i]) - double(b.data[i]));
        l1 /= double(a.numel());

        double spec = 0.0;
        for (int n = 0; n < 1; ++n)
            for (int c = 0; c < 2; ++c) {
                std::vector<double> pa(16), pb(16);
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j) {
                        pa[std::size_t(i) * 4 + j] = double(a.at(n, c, i, j));
                        pb[std::size_t(i) * 4 + j] = double(b.at(n, c, i, j));
                    }
                std::vector<double> ra, ia, rb, ib;
                dft_reference(pa, 4, 4, ra, ia);
                dft_reference(pb, 4, 4, rb, ib);
                for (int i = 0; i < 16; ++i) {
                    spec += std::abs(ra[std::size_t(i)] - rb[std::size_t(i)]);
                    spec += std::abs(ia[std::size_t(i)] - ib[std::size_t(i)]);
                }
            }
        const double want = l1 + 0.1 * spec / (2.0 * double(a.numel()));
        CHECK(fft_freq_loss(a, b) == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("dft satisfies Parseval under the unnormalized convention") {
    std::mt19937 rng(21u);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> x(64);
    for (auto& v : x) v = dist(rng);
    const auto [re, im] = dft2d(x, 8, 8);
    double spec = 0.0, spatial = 0.0;
    for (int i = 0; i < 64; ++i) {
        spec += re[std::size_t(i)] * re[std::size_t(i)] + im[std::size_t(i)] * im[std::size_t(i)];
        spatial += x[std::size_t(i)] * x[std::size_t(i)];
    }
    CHECK(spec == doctest::Approx(64.0 * spatial).epsilon(1e-4));
}

TEST_CASE("dft of a constant concentrates at DC") {
    std::vector<double> x(12, 3.0);
    const auto [re, im] = dft2d(x, 3, 4);
    CHECK(re[0] == doctest::Approx(36.0));
    for (std::size_t i = 1; i < 12; ++i) CHECK(re[i] == doctest::Approx(0.0).epsilon(1e-9));
    for (std::size_t i = 0; i < 12; ++i) CHECK(im[i] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dct is orthonormal and matches the definition") {
    std::mt19937 rng(22u);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> x(20);
    for (auto& v : x) v = dist(rng);

    const std::vector<double> got = dct2d(x, 4, 5);
    const std::vector<double> want = dct2_reference(x, 4, 5);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));

    double exy = 0.0, exx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        exy += got[i] * got[i];
        exx += x[i] * x[i];
    }
    CHECK(exy == doctest::Approx(exx).epsilon(1e-9));  // energy preserved

    std::vector<double> c(8, 2.5);
    const std::vector<double> dc = dct1d(c);
    CHECK(dc[0] == doctest::Approx(2.5 * std::sqrt(8.0)));
    for (std::size_t i = 1; i < 8; ++i) CHECK(dc[i] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("box blur is border-clamped and fixes constants") {
    const Tensor c = Tensor::full({1, 2, 5, 5}, 1.25f);
    CHECK(max_abs_diff(box_blur(c), c) == 0.0);

    Tensor x(1, 1, 3, 3);
    for (int i = 0; i < 9; ++i) x.data[std::size_t(i)] = float(i);
    const Tensor y = box_blur(x, 3);
    // corner window covers indices {0,1,3,4}
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx((0 + 1 + 3 + 4) / 4.0));
    // centre window covers everything
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx(4.0));
    // edge window covers {0,1,2,3,4,5}
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx((0 + 1 + 2 + 3 + 4 + 5) / 6.0));
}

TEST_CASE("edge loss ignores shared flat content") {
    const Tensor a = Tensor::full({1, 1, 8, 8}, 10.0f);
    const Tensor b = Tensor::full({1, 1, 8, 8}, -3.0f);
    CHECK(edge_loss(a, b) == 0.0);  // different constants, same (zero) detail

    Tensor step = Tensor::zeros({1, 1, 8, 8});
    for (int i = 0; i < 8; ++i)
        for (int j = 4; j < 8; ++j) step.at(0, 0, i, j) = 1.0f;
    CHECK(edge_loss(a, step) > 0.0);
}

TEST_CASE("affinity distillation") {
    SUBCASE("hand-computed gram on a 2-channel 2x2 layer") {
        Tensor s(1, 2, 2, 2);
        s.data = {1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f};
        Tensor t(1, 2, 2, 2);
        t.data = {0.0f, 1.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f, 0.0f};
        // Channel rows over the 4 positions: s has (1,0,0,0) and (0,1,0,0),
        // t swaps them. Both grams are diag(1,1,0,0), so the loss is 0.
        CHECK(affinity_distill_loss({s}, {t}) == doctest::Approx(0.0));

        Tensor u(1, 2, 2, 2);
        u.data = {1.0f, 1.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f};
        // u row 0 normalizes to (1,1,0,0)/sqrt(2), row 1 is all zero, so
        // gram_u has 1/2 in the top-left 2x2 block. |gram_s - gram_u| is
        // 1/2 at each of those four entries -> mean over 16 entries = 1/8.
        CHECK(affinity_distill_loss({s}, {u}) == doctest::Approx(1.0 / 8.0));
    }
    SUBCASE("scale invariance: teacher twice the student") {
        std::mt19937 rng(23u);
        std::vector<Tensor> student, teacher;
        for (int layer = 0; layer < 3; ++layer) {
            Tensor s(2, 4 + layer, 5, 5);
            fill_uniform(s, rng(), -1.0, 1.0);
            Tensor t = s;
            for (auto& v : t.data) v *= 2.0f;
            student.push_back(s);
            teacher.push_back(std::move(t));
        }
        CHECK(affinity_distill_loss(student, teacher) == doctest::Approx(0.0).epsilon(1e-7));
    }
    SUBCASE("channel counts may differ but geometry must match") {
        const Tensor s = rand_tensor({1, 4, 5, 5}, 24u);
        const Tensor t8 = rand_tensor({1, 8, 5, 5}, 25u);
        CHECK_NOTHROW(affinity_distill_loss({s}, {t8}));
        const Tensor bad = rand_tensor({1, 4, 6, 6}, 26u);
        CHECK_THROWS(affinity_distill_loss({s}, {bad}));
        CHECK_THROWS(affinity_distill_loss({s, s}, {s}));  // layer count mismatch
    }
}

TEST_CASE("distillation total composes its three terms") {
    const Tensor hr = rand_tensor({1, 3, 8, 8}, 27u);
    const Tensor out = rand_tensor({1, 3, 8, 8}, 28u);
    const Tensor tout = rand_tensor({1, 3, 8, 8}, 29u);
    const Tensor sf = rand_tensor({1, 4, 8, 8}, 30u);
    const Tensor tf = rand_tensor({1, 4, 8, 8}, 31u);

    const double rec = mse_loss(out, hr);
    const double pix = pixel_distill_loss(tout, out);
    const double aff = affinity_distill_loss({sf}, {tf});
    const double total = distill_total_loss(hr, out, tout, {sf}, {tf});
    CHECK(total == doctest::Approx(rec + pix + aff));

    const double weighted = distill_total_loss(hr, out, tout, {sf}, {tf}, 2.0, 0.5, 3.0);
    CHECK(weighted == doctest::Approx(2.0 * rec + 0.5 * pix + 3.0 * aff));

    CHECK(distill_total_loss(hr, hr, hr, {sf}, {sf}) == doctest::Approx(0.0));
}
