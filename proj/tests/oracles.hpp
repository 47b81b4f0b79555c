#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (direct loops, no shared code with the library kernels)
// so they can arbitrate the real implementations.

#include <cmath>
#include <vector>

#include "hit/rng.hpp"
#include "hit/tensor.hpp"

namespace oracle {

using hit::real;
using hit::Rng;
using hit::Tensor;

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double std = 1.0) {
    Tensor t(std::move(shape));
    real* p = t.mutable_data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<real>(rng.normal(0.0, std));
    return t;
}

inline Tensor random_image(Rng& rng, int h, int w, int c = 3) {
    Tensor t({h, w, c});
    real* p = t.mutable_data();
    for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<real>(rng.uniform());
    return t;
}

// naive triple loop, k ascending
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            real acc = 0;
            for (int t = 0; t < k; ++t) acc += a.at({i, t}) * b.at({t, j});
            c.mutable_data()[static_cast<std::int64_t>(i) * n + j] = acc;
        }
    return c;
}

// direct 6-nested-loop cross-correlation with zero padding and groups;
// accumulation order (ky, kx, ci) matches the documented kernel layout.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                     int groups) {
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int kh = w.dim(0), kw = w.dim(1), cg = w.dim(2), cout = w.dim(3);
    const int og = cout / groups;
    const int ho = (h + 2 * padding - kh) / stride + 1;
    const int wo = (wd + 2 * padding - kw) / stride + 1;
    Tensor out({ho, wo, cout});
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
            for (int co = 0; co < cout; ++co) {
                const int g = co / og;
                real acc = 0;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int ci = 0; ci < cg; ++ci) {
                            const int iy = oy * stride + ky - padding;
                            const int ix = ox * stride + kx - padding;
                            real v = 0;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < wd) v = x.at({iy, ix, g * cg + ci});
                            acc += v * w.at({ky, kx, ci, co});
                        }
                if (b.defined()) acc += b.data()[co];
                out.mutable_data()[(static_cast<std::int64_t>(oy) * wo + ox) * cout + co] = acc;
            }
    return out;
}

// extended-precision softmax over a vector
inline std::vector<long double> softmax_ld(const std::vector<long double>& x) {
    long double mx = x[0];
    for (long double v : x) mx = std::max(mx, v);
    std::vector<long double> e(x.size());
    long double z = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        e[i] = std::exp(x[i] - mx);
        z += e[i];
    }
    for (auto& v : e) v /= z;
    return e;
}

// direct sliding-window SSIM, non-separable, plain double accumulation
inline double ssim_plane(const Tensor& a, const Tensor& b) {
    const int h = a.dim(0), w = a.dim(1);
    const int win = 11;
    const double sigma = 1.5;
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double total_w = 0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            const double dy = y - win / 2, dx = x - win / 2;
            g[static_cast<std::size_t>(y) * win + x] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            total_w += g[static_cast<std::size_t>(y) * win + x];
        }
    for (double& v : g) v /= total_w;
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    int count = 0;
    for (int y = 0; y + win <= h; ++y)
        for (int x = 0; x + win <= w; ++x) {
            double ma = 0, mb = 0;
            for (int wy = 0; wy < win; ++wy)
                for (int wx = 0; wx < win; ++wx) {
                    ma += g[static_cast<std::size_t>(wy) * win + wx] * a.at({y + wy, x + wx});
                    mb += g[static_cast<std::size_t>(wy) * win + wx] * b.at({y + wy, x + wx});
                }
            double va = 0, vb = 0, cov = 0;
            for (int wy = 0; wy < win; ++wy)
                for (int wx = 0; wx < win; ++wx) {
                    const double da = a.at({y + wy, x + wx}) - ma;
                    const double db = b.at({y + wy, x + wx}) - mb;
                    const double gv = g[static_cast<std::size_t>(wy) * win + wx];
                    va += gv * da * da;
                    vb += gv * db * db;
                    cov += gv * da * db;
                }
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return m;
}

}  // namespace oracle
