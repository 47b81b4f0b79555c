#include "hit/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "hit/ops.hpp"

namespace hit {

Tensor clamp01(const Tensor& img) {
    Tensor out(img.shape());
    const real* p = img.data();
    real* q = out.mutable_data();
    for (std::int64_t i = 0; i < img.numel(); ++i) q[i] = std::min(real(1), std::max(real(0), p[i]));
    return out;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!a.same_shape(b)) throw ShapeError("psnr: extents differ, " + a.shape_str() + " vs " + b.shape_str());
    const real* pa = a.data();
    const real* pb = b.data();
    double mse = 0;
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> ssim_window() {
    std::vector<double> w(kSsimWindow * kSsimWindow);
    const int r = kSsimWindow / 2;
    double total = 0;
    for (int y = 0; y < kSsimWindow; ++y)
        for (int x = 0; x < kSsimWindow; ++x) {
            const double dy = y - r, dx = x - r;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
            w[static_cast<std::size_t>(y) * kSsimWindow + x] = v;
            total += v;
        }
    for (double& v : w) v /= total;
    return w;
}

double ssim_plane(const real* a, const real* b, int h, int w) {
    if (h < kSsimWindow || w < kSsimWindow)
        throw DomainError("ssim: image smaller than the 11x11 window");
    static const std::vector<double> win = ssim_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    std::int64_t count = 0;
    for (int y = 0; y + kSsimWindow <= h; ++y) {
        for (int x = 0; x + kSsimWindow <= w; ++x) {
            double mu_a = 0, mu_b = 0;
            for (int wy = 0; wy < kSsimWindow; ++wy)
                for (int wx = 0; wx < kSsimWindow; ++wx) {
                    const double g = win[static_cast<std::size_t>(wy) * kSsimWindow + wx];
                    mu_a += g * static_cast<double>(a[(static_cast<std::int64_t>(y) + wy) * w + x + wx]);
                    mu_b += g * static_cast<double>(b[(static_cast<std::int64_t>(y) + wy) * w + x + wx]);
                }
            double var_a = 0, var_b = 0, cov = 0;
            for (int wy = 0; wy < kSsimWindow; ++wy)
                for (int wx = 0; wx < kSsimWindow; ++wx) {
                    const double g = win[static_cast<std::size_t>(wy) * kSsimWindow + wx];
                    const double da = static_cast<double>(a[(static_cast<std::int64_t>(y) + wy) * w + x + wx]) - mu_a;
                    const double db = static_cast<double>(b[(static_cast<std::int64_t>(y) + wy) * w + x + wx]) - mu_b;
                    var_a += g * da * da;
                    var_b += g * db * db;
                    cov += g * da * db;
                }
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("ssim: extents differ, " + a.shape_str() + " vs " + b.shape_str());
    if (a.rank() == 2) return ssim_plane(a.data(), b.data(), a.dim(0), a.dim(1));
    if (a.rank() == 3) {
        const int h = a.dim(0), w = a.dim(1), c = a.dim(2);
        // per-channel planes, then channel average
        std::vector<real> pa(static_cast<std::size_t>(h) * w), pb(pa.size());
        double total = 0;
        for (int ch = 0; ch < c; ++ch) {
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                pa[static_cast<std::size_t>(i)] = a.data()[i * c + ch];
                pb[static_cast<std::size_t>(i)] = b.data()[i * c + ch];
            }
            total += ssim_plane(pa.data(), pb.data(), h, w);
        }
        return total / c;
    }
    throw ShapeError("ssim expects rank-2 or rank-3 images");
}

Tensor rgb_to_y(const Tensor& img) {
    if (img.rank() != 3 || img.dim(2) != 3)
        throw ShapeError("rgb_to_y expects (H,W,3), got " + img.shape_str());
    const int h = img.dim(0), w = img.dim(1);
    Tensor out({h, w, 1});
    const real* p = img.data();
    real* q = out.mutable_data();
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
        const double r = static_cast<double>(p[i * 3 + 0]);
        const double g = static_cast<double>(p[i * 3 + 1]);
        const double b = static_cast<double>(p[i * 3 + 2]);
        q[i] = static_cast<real>((65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0);
    }
    return out;
}

Tensor integrated_gradients(const std::function<Tensor(const Tensor&)>& target, const Tensor& input,
                            const Tensor& baseline, int steps) {
    if (!input.same_shape(baseline))
        throw ShapeError("integrated_gradients: input/baseline extents differ");
    if (steps < 1) throw DomainError("integrated_gradients: steps must be >= 1");

    Tensor diff(input.shape());
    {
        const real* pi = input.data();
        const real* pb = baseline.data();
        real* pd = diff.mutable_data();
        for (std::int64_t i = 0; i < input.numel(); ++i) pd[i] = pi[i] - pb[i];
    }

    Tensor grad_sum(input.shape());
    for (int k = 1; k <= steps; ++k) {
        const real t = static_cast<real>(k) / static_cast<real>(steps);
        Tensor point(input.shape());
        {
            const real* pb = baseline.data();
            const real* pd = diff.data();
            real* pp = point.mutable_data();
            for (std::int64_t i = 0; i < input.numel(); ++i) pp[i] = pb[i] + t * pd[i];
        }
        point.set_requires_grad(true);
        Tape tape;
        Tensor value = target(point);
        if (value.numel() != 1)
            throw ContractError("integrated_gradients target must reduce to a scalar");
        GradMap grads = tape.backward(value);
        Tensor g = grads.grad(point);
        if (g.defined()) {
            real* ps = grad_sum.mutable_data();
            const real* pg = g.data();
            for (std::int64_t i = 0; i < input.numel(); ++i) ps[i] += pg[i];
        }
    }

    Tensor attribution(input.shape());
    {
        const real inv = real(1) / static_cast<real>(steps);
        const real* pd = diff.data();
        const real* ps = grad_sum.data();
        real* pa = attribution.mutable_data();
        for (std::int64_t i = 0; i < input.numel(); ++i) pa[i] = pd[i] * ps[i] * inv;
    }
    return attribution;
}

}  // namespace hit
