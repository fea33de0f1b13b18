#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace esrkit {

// All image/feature data is dense NCHW, row-major, contiguous.
struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    bool operator!=(const Shape4& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::invalid_argument(msg);
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

template <typename T>
struct TensorT {
    Shape4 shape{};
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(Shape4 s) : shape(s) {
        require(s.n >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0,
                "tensor: negative dimension in shape " + s.str());
        data.assign(static_cast<std::size_t>(s.numel()), T(0));
    }
    TensorT(int n, int c, int h, int w) : TensorT(Shape4{n, c, h, w}) {}

    std::int64_t numel() const { return shape.numel(); }
    bool empty() const { return data.empty(); }

    std::int64_t index(int n, int c, int h, int w) const {
        return ((std::int64_t(n) * shape.c + c) * shape.h + h) * shape.w + w;
    }
    T& at(int n, int c, int h, int w) { return data[static_cast<std::size_t>(index(n, c, h, w))]; }
    const T& at(int n, int c, int h, int w) const {
        return data[static_cast<std::size_t>(index(n, c, h, w))];
    }

    static TensorT zeros(Shape4 s) { return TensorT(s); }
    static TensorT full(Shape4 s, T v) {
        TensorT t(s);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(double(v))) return false;
    return true;
}

// Deterministic Gaussian fill; mean 0, given stddev.
template <typename T>
void fill_normal(TensorT<T>& t, std::uint32_t seed, double stddev = 1.0) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = T(dist(rng));
}

template <typename T>
void fill_uniform(TensorT<T>& t, std::uint32_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data) v = T(dist(rng));
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    require(a.shape == b.shape,
            "max_abs_diff: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
    return m;
}

template <typename To, typename From>
TensorT<To> cast_tensor(const TensorT<From>& src) {
    TensorT<To> out(src.shape);
    for (std::size_t i = 0; i < src.data.size(); ++i) out.data[i] = To(src.data[i]);
    return out;
}

}  // namespace esrkit
