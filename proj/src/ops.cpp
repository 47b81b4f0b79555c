#include "hit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hit/common.hpp"
#include "hit/tensor.hpp"

namespace hit {

// ---------------------------------------------------------------------------
// MAC accounting

namespace {
thread_local unsigned long long t_mac_count = 0;
thread_local bool t_mac_active = false;
bool g_corrupt_matmul_grad = false;
}  // namespace

void MacCounter::start() {
    t_mac_count = 0;
    t_mac_active = true;
}
unsigned long long MacCounter::stop() {
    t_mac_active = false;
    return t_mac_count;
}
void MacCounter::add(unsigned long long macs) {
    if (t_mac_active) t_mac_count += macs;
}
bool MacCounter::active() { return t_mac_active; }

void set_matmul_grad_corruption(bool enabled) { g_corrupt_matmul_grad = enabled; }

// ---------------------------------------------------------------------------
// Kernels. Pure functions over buffers; gradient closures call these so the
// backward sweep never re-enters the tape.

namespace {

using i64 = std::int64_t;

std::vector<int> strides_of(const std::vector<int>& shape) {
    std::vector<int> s(shape.size());
    int acc = 1;
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = acc;
        acc *= shape[static_cast<std::size_t>(i)];
    }
    return s;
}

template <typename F>
Tensor k_map(const Tensor& a, F f) {
    Tensor out(a.shape());
    const real* x = a.data();
    real* y = out.mutable_data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) y[i] = f(x[i]);
    return out;
}

template <typename F>
Tensor k_zip(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    const real* x = a.data();
    const real* y = b.data();
    real* z = out.mutable_data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) z[i] = f(x[i], y[i]);
    return out;
}

Tensor k_add(const Tensor& a, const Tensor& b) { return k_zip(a, b, [](real x, real y) { return x + y; }); }
Tensor k_mul(const Tensor& a, const Tensor& b) { return k_zip(a, b, [](real x, real y) { return x * y; }); }
Tensor k_scale(const Tensor& a, real c) { return k_map(a, [c](real x) { return x * c; }); }

Tensor k_transpose(const Tensor& a) {
    const int m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    const real* x = a.data();
    real* y = out.mutable_data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) y[static_cast<i64>(j) * m + i] = x[static_cast<i64>(i) * n + j];
    return out;
}

// c[i,j] = sum_k a[i,k] b[k,j]; k ascends per output element.
Tensor mm_nn(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    MacCounter::add(static_cast<unsigned long long>(m) * k * n);
    Tensor out({m, n});
    const real* pa = a.data();
    const real* pb = b.data();
    real* pc = out.mutable_data();
    detail::parallel_for(m, [&](i64 lo, i64 hi) {
        for (i64 i = lo; i < hi; ++i) {
            real* c = pc + i * n;
            const real* ar = pa + i * k;
            for (int t = 0; t < k; ++t) {
                const real av = ar[t];
                const real* br = pb + static_cast<i64>(t) * n;
                for (int j = 0; j < n; ++j) c[j] += av * br[j];
            }
        }
    });
    return out;
}

// c[i,q] = sum_p a[i,p] b[q,p]
Tensor mm_nt(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), p = a.dim(1), q = b.dim(0);
    MacCounter::add(static_cast<unsigned long long>(m) * p * q);
    Tensor out({m, q});
    const real* pa = a.data();
    const real* pb = b.data();
    real* pc = out.mutable_data();
    detail::parallel_for(m, [&](i64 lo, i64 hi) {
        for (i64 i = lo; i < hi; ++i) {
            const real* ar = pa + i * p;
            real* c = pc + i * q;
            for (int j = 0; j < q; ++j) {
                const real* br = pb + static_cast<i64>(j) * p;
                real acc = 0;
                for (int t = 0; t < p; ++t) acc += ar[t] * br[t];
                c[j] = acc;
            }
        }
    });
    return out;
}

// c = a^T b for a:(m,p), b:(m,q)
Tensor mm_tn(const Tensor& a, const Tensor& b) { return mm_nn(k_transpose(a), b); }

Tensor k_bmm(const Tensor& a, const Tensor& b) {
    const int bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    MacCounter::add(static_cast<unsigned long long>(bs) * m * k * n);
    Tensor out({bs, m, n});
    const real* pa = a.data();
    const real* pb = b.data();
    real* pc = out.mutable_data();
    detail::parallel_for(static_cast<i64>(bs) * m, [&](i64 lo, i64 hi) {
        for (i64 r = lo; r < hi; ++r) {
            const i64 bi = r / m, i = r % m;
            const real* ar = pa + (bi * m + i) * k;
            const real* bb = pb + bi * k * n;
            real* c = pc + r * n;
            for (int t = 0; t < k; ++t) {
                const real av = ar[t];
                const real* br = bb + static_cast<i64>(t) * n;
                for (int j = 0; j < n; ++j) c[j] += av * br[j];
            }
        }
    });
    return out;
}

Tensor k_bmm_nt(const Tensor& a, const Tensor& b) {
    const int bs = a.dim(0), m = a.dim(1), p = a.dim(2), q = b.dim(1);
    MacCounter::add(static_cast<unsigned long long>(bs) * m * p * q);
    Tensor out({bs, m, q});
    const real* pa = a.data();
    const real* pb = b.data();
    real* pc = out.mutable_data();
    detail::parallel_for(static_cast<i64>(bs) * m, [&](i64 lo, i64 hi) {
        for (i64 r = lo; r < hi; ++r) {
            const i64 bi = r / m;
            const real* ar = pa + r * p;
            const real* bb = pb + bi * q * p;
            real* c = pc + r * q;
            for (int j = 0; j < q; ++j) {
                const real* br = bb + static_cast<i64>(j) * p;
                real acc = 0;
                for (int t = 0; t < p; ++t) acc += ar[t] * br[t];
                c[j] = acc;
            }
        }
    });
    return out;
}

// c[b,k,n] = sum_m a[b,m,k] g[b,m,n]
Tensor k_bmm_tn(const Tensor& a, const Tensor& g) {
    const int bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = g.dim(2);
    MacCounter::add(static_cast<unsigned long long>(bs) * m * k * n);
    Tensor out({bs, k, n});
    const real* pa = a.data();
    const real* pg = g.data();
    real* pc = out.mutable_data();
    detail::parallel_for(bs, [&](i64 blo, i64 bhi) {
        for (i64 bi = blo; bi < bhi; ++bi) {
            real* cb = pc + bi * k * n;
            for (int mm = 0; mm < m; ++mm) {
                const real* ar = pa + (bi * m + mm) * k;
                const real* gr = pg + (bi * m + mm) * n;
                for (int t = 0; t < k; ++t) {
                    const real av = ar[t];
                    real* cr = cb + static_cast<i64>(t) * n;
                    for (int j = 0; j < n; ++j) cr[j] += av * gr[j];
                }
            }
        }
    });
    return out;
}

Tensor k_permute(const Tensor& a, const std::vector<int>& axes) {
    const auto& in_shape = a.shape();
    const int r = a.rank();
    std::vector<int> out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    const auto in_strides = strides_of(in_shape);
    std::vector<i64> step(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) step[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    Tensor out(out_shape);
    const real* x = a.data();
    real* y = out.mutable_data();
    const i64 n = a.numel();
    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    i64 src = 0;
    for (i64 flat = 0; flat < n; ++flat) {
        y[flat] = x[src];
        for (int d = r - 1; d >= 0; --d) {
            auto du = static_cast<std::size_t>(d);
            if (++idx[du] < out_shape[du]) {
                src += step[du];
                break;
            }
            src -= step[du] * (out_shape[du] - 1);
            idx[du] = 0;
        }
    }
    return out;
}

Tensor k_softmax(const Tensor& x, int axis, bool check_finite) {
    const auto& shape = x.shape();
    i64 outer = 1, inner = 1;
    const int len = shape[static_cast<std::size_t>(axis)];
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < x.rank(); ++i) inner *= shape[static_cast<std::size_t>(i)];
    Tensor out(shape);
    const real* px = x.data();
    real* py = out.mutable_data();
    if (check_finite) {
        const i64 n = x.numel();
        for (i64 i = 0; i < n; ++i)
            if (!std::isfinite(px[i])) throw NumericError("softmax input contains a non-finite value");
    }
    detail::parallel_for(outer, [&](i64 olo, i64 ohi) {
        for (i64 o = olo; o < ohi; ++o) {
            for (i64 in = 0; in < inner; ++in) {
                const real* sx = px + o * len * inner + in;
                real* sy = py + o * len * inner + in;
                real mx = sx[0];
                for (int t = 1; t < len; ++t) mx = std::max(mx, sx[static_cast<i64>(t) * inner]);
                real z = 0;
                for (int t = 0; t < len; ++t) {
                    const real e = std::exp(sx[static_cast<i64>(t) * inner] - mx);
                    sy[static_cast<i64>(t) * inner] = e;
                    z += e;
                }
                const real rz = real(1) / z;
                for (int t = 0; t < len; ++t) sy[static_cast<i64>(t) * inner] *= rz;
            }
        }
    });
    return out;
}

Tensor k_softmax_backward(const Tensor& g, const Tensor& p, int axis) {
    const auto& shape = p.shape();
    i64 outer = 1, inner = 1;
    const int len = shape[static_cast<std::size_t>(axis)];
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < p.rank(); ++i) inner *= shape[static_cast<std::size_t>(i)];
    Tensor out(shape);
    const real* pg = g.data();
    const real* pp = p.data();
    real* py = out.mutable_data();
    for (i64 o = 0; o < outer; ++o) {
        for (i64 in = 0; in < inner; ++in) {
            const i64 base = o * len * inner + in;
            real dot = 0;
            for (int t = 0; t < len; ++t) dot += pg[base + static_cast<i64>(t) * inner] * pp[base + static_cast<i64>(t) * inner];
            for (int t = 0; t < len; ++t) {
                const i64 j = base + static_cast<i64>(t) * inner;
                py[j] = pp[j] * (pg[j] - dot);
            }
        }
    }
    return out;
}

// Zero-padded copy of an (H,W,C) map.
Tensor k_pad_zero(const Tensor& x, int pad) {
    if (pad == 0) return x;
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({h + 2 * pad, w + 2 * pad, c});
    const real* px = x.data();
    real* py = out.mutable_data();
    const i64 row = static_cast<i64>(w) * c;
    const i64 prow = static_cast<i64>(w + 2 * pad) * c;
    for (int y = 0; y < h; ++y)
        std::memcpy(py + (static_cast<i64>(y + pad) * (w + 2 * pad) + pad) * c, px + y * row, sizeof(real) * static_cast<std::size_t>(row));
    (void)prow;
    return out;
}

struct ConvDims {
    int h, w, cin, kh, kw, cg, cout, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int padding, int groups) {
    if (x.rank() != 3) throw ShapeError("conv2d input must be (H,W,C), got " + x.shape_str());
    if (w.rank() != 4) throw ShapeError("conv2d kernel must be (kh,kw,Cin/groups,Cout), got " + w.shape_str());
    if (stride < 1) throw DomainError("conv2d stride must be >= 1");
    if (padding < 0) throw DomainError("conv2d padding must be >= 0");
    ConvDims d;
    d.h = x.dim(0);
    d.w = x.dim(1);
    d.cin = x.dim(2);
    d.kh = w.dim(0);
    d.kw = w.dim(1);
    d.cg = w.dim(2);
    d.cout = w.dim(3);
    if (groups < 1 || d.cin % groups != 0 || d.cout % groups != 0)
        throw ShapeError("conv2d groups " + std::to_string(groups) + " must divide Cin=" + std::to_string(d.cin) +
                         " and Cout=" + std::to_string(d.cout));
    if (d.cg != d.cin / groups)
        throw ShapeError("conv2d kernel channel extent " + std::to_string(d.cg) + " != Cin/groups = " +
                         std::to_string(d.cin / groups));
    if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding)
        throw ShapeError("conv2d kernel " + w.shape_str() + " larger than padded input " + x.shape_str());
    d.ho = (d.h + 2 * padding - d.kh) / stride + 1;
    d.wo = (d.w + 2 * padding - d.kw) / stride + 1;
    return d;
}

// (HoWo, kh*kw*Cg) patch matrix for one group; zero taps materialized.
Tensor k_im2col(const Tensor& xp, int g, const ConvDims& d, int stride) {
    const int hp = xp.dim(0), wp = xp.dim(1), cin = xp.dim(2);
    const int K = d.kh * d.kw * d.cg;
    Tensor cols({d.ho * d.wo, K});
    const real* px = xp.data();
    real* pc = cols.mutable_data();
    const int c0 = g * d.cg;
    detail::parallel_for(d.ho, [&](i64 lo, i64 hi) {
        for (i64 oy = lo; oy < hi; ++oy) {
            for (int ox = 0; ox < d.wo; ++ox) {
                real* row = pc + (oy * d.wo + ox) * K;
                int t = 0;
                for (int ky = 0; ky < d.kh; ++ky) {
                    const i64 iy = oy * stride + ky;
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const i64 ix = static_cast<i64>(ox) * stride + kx;
                        const real* src = px + (iy * wp + ix) * cin + c0;
                        for (int c = 0; c < d.cg; ++c) row[t++] = src[c];
                    }
                }
            }
        }
    });
    (void)hp;
    return cols;
}

// Weight matrix (kh*kw*Cg, Og) for one group.
Tensor k_wmat(const Tensor& w, int g, const ConvDims& d, int groups) {
    const int og = d.cout / groups;
    const int K = d.kh * d.kw * d.cg;
    Tensor wm({K, og});
    const real* pw = w.data();
    real* pm = wm.mutable_data();
    for (int ky = 0; ky < d.kh; ++ky)
        for (int kx = 0; kx < d.kw; ++kx)
            for (int c = 0; c < d.cg; ++c) {
                const int row = (ky * d.kw + kx) * d.cg + c;
                const real* src = pw + ((static_cast<i64>(ky) * d.kw + kx) * d.cg + c) * d.cout + static_cast<i64>(g) * og;
                for (int o = 0; o < og; ++o) pm[static_cast<i64>(row) * og + o] = src[o];
            }
    return wm;
}

Tensor k_colsum(const Tensor& m) {
    const int rows = m.dim(0), cols = m.dim(1);
    Tensor out({cols});
    const real* p = m.data();
    real* q = out.mutable_data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) q[c] += p[static_cast<i64>(r) * cols + c];
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Recording helper

namespace {

void maybe_record(Tensor& result, std::initializer_list<const Tensor*> inputs,
                  std::function<std::vector<Tensor>(const Tensor&)> grad_fn) {
    Tape* tape = Tape::active();
    if (!tape) return;
    std::vector<int> parents;
    parents.reserve(inputs.size());
    bool any = false;
    for (const Tensor* in : inputs) {
        const int p = tape->track(*in);
        parents.push_back(p);
        any = any || p >= 0;
    }
    if (any) tape->record(result, std::move(parents), std::move(grad_fn));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = k_add(a, b);
    maybe_record(out, {&a, &b}, [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = k_zip(a, b, [](real x, real y) { return x - y; });
    maybe_record(out, {&a, &b}, [](const Tensor& g) {
        return std::vector<Tensor>{g, k_scale(g, real(-1))};
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = k_mul(a, b);
    maybe_record(out, {&a, &b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{k_mul(g, b), k_mul(g, a)};
    });
    return out;
}

Tensor neg(const Tensor& a) {
    Tensor out = k_scale(a, real(-1));
    maybe_record(out, {&a}, [](const Tensor& g) { return std::vector<Tensor>{k_scale(g, real(-1))}; });
    return out;
}

Tensor add_scalar(const Tensor& a, real c) {
    Tensor out = k_map(a, [c](real x) { return x + c; });
    maybe_record(out, {&a}, [](const Tensor& g) { return std::vector<Tensor>{g}; });
    return out;
}

Tensor mul_scalar(const Tensor& a, real c) {
    Tensor out = k_scale(a, c);
    maybe_record(out, {&a}, [c](const Tensor& g) { return std::vector<Tensor>{k_scale(g, c)}; });
    return out;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw ShapeError("scale_by expects a single-element scale, got " + s.shape_str());
    const real sv = s.data()[0];
    Tensor out = k_scale(a, sv);
    maybe_record(out, {&a, &s}, [a, sv](const Tensor& g) {
        real dot = 0;
        const real* pg = g.data();
        const real* pa = a.data();
        const i64 n = a.numel();
        for (i64 i = 0; i < n; ++i) dot += pg[i] * pa[i];
        return std::vector<Tensor>{k_scale(g, sv), Tensor({1}, {dot})};
    });
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out = k_map(a, [](real x) { return std::exp(x); });
    Tensor saved = out;
    maybe_record(out, {&a}, [saved](const Tensor& g) { return std::vector<Tensor>{k_mul(g, saved)}; });
    return out;
}

Tensor sqrt(const Tensor& a) {
    const real* p = a.data();
    for (i64 i = 0; i < a.numel(); ++i)
        if (p[i] < real(0)) throw NumericError("sqrt of negative value");
    Tensor out = k_map(a, [](real x) { return std::sqrt(x); });
    Tensor saved = out;
    maybe_record(out, {&a}, [saved](const Tensor& g) {
        return std::vector<Tensor>{k_zip(g, saved, [](real gv, real yv) { return gv * real(0.5) / yv; })};
    });
    return out;
}

Tensor reciprocal(const Tensor& a) {
    Tensor out = k_map(a, [](real x) { return real(1) / x; });
    Tensor saved = out;
    maybe_record(out, {&a}, [saved](const Tensor& g) {
        return std::vector<Tensor>{k_zip(g, saved, [](real gv, real yv) { return -gv * yv * yv; })};
    });
    return out;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& a) {
    Tensor out = k_map(a, [](real x) {
        return static_cast<real>(0.5 * static_cast<double>(x) * (1.0 + std::erf(static_cast<double>(x) * kInvSqrt2)));
    });
    maybe_record(out, {&a}, [a](const Tensor& g) {
        return std::vector<Tensor>{k_zip(g, a, [](real gv, real xv) {
            const double x = static_cast<double>(xv);
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return static_cast<real>(gv * (cdf + x * pdf));
        })};
    });
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
    Tensor out = mm_nn(a, b);
    maybe_record(out, {&a, &b}, [a, b](const Tensor& g) {
        Tensor da = mm_nt(g, b);
        if (g_corrupt_matmul_grad) da = k_scale(da, real(1.01));
        return std::vector<Tensor>{da, mm_tn(a, g)};
    });
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
    Tensor out = k_bmm(a, b);
    maybe_record(out, {&a, &b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{k_bmm_nt(g, b), k_bmm_tn(a, g)};
    });
    return out;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw ShapeError("bmm_nt: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
    Tensor out = k_bmm_nt(a, b);
    maybe_record(out, {&a, &b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{k_bmm(g, b), k_bmm_tn(g, a)};
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + a.shape_str());
    Tensor out = k_transpose(a);
    maybe_record(out, {&a}, [](const Tensor& g) { return std::vector<Tensor>{k_transpose(g)}; });
    return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    if (static_cast<int>(axes.size()) != a.rank())
        throw ShapeError("permute axes count mismatch for " + a.shape_str());
    Tensor out = k_permute(a, axes);
    std::vector<int> inverse(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inverse[static_cast<std::size_t>(axes[i])] = static_cast<int>(i);
    maybe_record(out, {&a}, [inverse](const Tensor& g) { return std::vector<Tensor>{k_permute(g, inverse)}; });
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    Tensor out = a.reshaped(std::move(shape));
    std::vector<int> back = a.shape();
    maybe_record(out, {&a}, [back](const Tensor& g) { return std::vector<Tensor>{g.reshaped(back)}; });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const int r = parts[0].rank();
    if (axis < 0 || axis >= r) throw ShapeError("concat axis out of range");
    std::vector<int> out_shape = parts[0].shape();
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != r) throw ShapeError("concat rank mismatch");
        for (int d = 0; d < r; ++d)
            if (d != axis && p.dim(d) != out_shape[static_cast<std::size_t>(d)])
                throw ShapeError("concat shape mismatch " + p.shape_str() + " vs " + parts[0].shape_str());
        total += p.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    Tensor out(out_shape);

    i64 outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= out_shape[static_cast<std::size_t>(d)];
    real* py = out.mutable_data();
    const i64 out_row = static_cast<i64>(total) * inner;
    i64 offset = 0;
    for (const Tensor& p : parts) {
        const i64 blk = static_cast<i64>(p.dim(axis)) * inner;
        const real* px = p.data();
        for (i64 o = 0; o < outer; ++o)
            std::memcpy(py + o * out_row + offset, px + o * blk, sizeof(real) * static_cast<std::size_t>(blk));
        offset += blk;
    }

    if (Tape* tape = Tape::active()) {
        std::vector<int> ps;
        bool any = false;
        for (const Tensor& p : parts) {
            const int id = tape->track(p);
            ps.push_back(id);
            any = any || id >= 0;
        }
        if (any) {
            std::vector<std::vector<int>> shapes;
            for (const Tensor& p : parts) shapes.push_back(p.shape());
            tape->record(out, std::move(ps), [shapes, axis, outer, inner, out_row](const Tensor& g) {
                std::vector<Tensor> grads;
                const real* pg = g.data();
                i64 off = 0;
                for (const auto& s : shapes) {
                    Tensor gp(s);
                    const i64 blk = static_cast<i64>(s[static_cast<std::size_t>(axis)]) * inner;
                    real* pp = gp.mutable_data();
                    for (i64 o = 0; o < outer; ++o)
                        std::memcpy(pp + o * blk, pg + o * out_row + off, sizeof(real) * static_cast<std::size_t>(blk));
                    off += blk;
                    grads.push_back(std::move(gp));
                }
                return grads;
            });
        }
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    const int r = a.rank();
    if (axis < 0 || axis >= r || start < 0 || len <= 0 || start + len > a.dim(axis))
        throw ShapeError("slice out of range for " + a.shape_str());
    std::vector<int> out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    Tensor out(out_shape);
    i64 outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);
    const i64 in_row = static_cast<i64>(a.dim(axis)) * inner;
    const i64 out_row = static_cast<i64>(len) * inner;
    const real* px = a.data();
    real* py = out.mutable_data();
    for (i64 o = 0; o < outer; ++o)
        std::memcpy(py + o * out_row, px + o * in_row + static_cast<i64>(start) * inner,
                    sizeof(real) * static_cast<std::size_t>(out_row));
    std::vector<int> in_shape = a.shape();
    maybe_record(out, {&a}, [in_shape, outer, inner, in_row, out_row, start](const Tensor& g) {
        Tensor gx(in_shape);
        real* pp = gx.mutable_data();
        const real* pg = g.data();
        for (i64 o = 0; o < outer; ++o)
            std::memcpy(pp + o * in_row + static_cast<i64>(start) * inner, pg + o * out_row,
                        sizeof(real) * static_cast<std::size_t>(out_row));
        return std::vector<Tensor>{gx};
    });
    return out;
}

Tensor sum(const Tensor& a) {
    real acc = 0;
    const real* p = a.data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) acc += p[i];
    Tensor out({1}, {acc});
    std::vector<int> shape = a.shape();
    maybe_record(out, {&a}, [shape](const Tensor& g) {
        return std::vector<Tensor>{Tensor::full(shape, g.data()[0])};
    });
    return out;
}

Tensor mean(const Tensor& a) {
    const real inv = real(1) / static_cast<real>(a.numel());
    real acc = 0;
    const real* p = a.data();
    const i64 n = a.numel();
    for (i64 i = 0; i < n; ++i) acc += p[i];
    Tensor out({1}, {acc * inv});
    std::vector<int> shape = a.shape();
    maybe_record(out, {&a}, [shape, inv](const Tensor& g) {
        return std::vector<Tensor>{Tensor::full(shape, g.data()[0] * inv)};
    });
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw ShapeError("linear: incompatible shapes " + x.shape_str() + " x " + w.shape_str());
    Tensor out = mm_nn(x, w);
    const int n = x.dim(0), co = w.dim(1);
    if (b.defined()) {
        if (b.numel() != co) throw ShapeError("linear bias shape " + b.shape_str());
        real* py = out.mutable_data();
        const real* pb = b.data();
        for (i64 r = 0; r < n; ++r)
            for (int c = 0; c < co; ++c) py[r * co + c] += pb[c];
    }
    maybe_record(out, {&x, &w, &b}, [x, w, has_bias = b.defined()](const Tensor& g) {
        std::vector<Tensor> grads{mm_nt(g, w), mm_tn(x, g), Tensor()};
        if (has_bias) grads[2] = k_colsum(g);
        return grads;
    });
    return out;
}

Tensor add_bias_last(const Tensor& x, const Tensor& b) {
    const int c = x.dim(x.rank() - 1);
    if (b.rank() != 1 || b.dim(0) != c)
        throw ShapeError("add_bias_last: bias " + b.shape_str() + " vs channels " + std::to_string(c));
    Tensor out(x.shape());
    const real* px = x.data();
    const real* pb = b.data();
    real* py = out.mutable_data();
    const i64 rows = x.numel() / c;
    for (i64 r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) py[r * c + j] = px[r * c + j] + pb[j];
    maybe_record(out, {&x, &b}, [c, rows](const Tensor& g) {
        Tensor db({c});
        real* pd = db.mutable_data();
        const real* pg = g.data();
        for (i64 r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) pd[j] += pg[r * c + j];
        return std::vector<Tensor>{g, db};
    });
    return out;
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

// Direct depthwise path; xp is the zero-padded input.
Tensor k_dwconv(const Tensor& xp, const Tensor& w, int stride, const ConvDims& d) {
    Tensor out({d.ho, d.wo, d.cout});
    const real* px = xp.data();
    const real* pw = w.data();
    real* py = out.mutable_data();
    const int wp = xp.dim(1), c = d.cout;
    MacCounter::add(static_cast<unsigned long long>(d.ho) * d.wo * c * d.kh * d.kw);
    detail::parallel_for(d.ho, [&](i64 lo, i64 hi) {
        for (i64 oy = lo; oy < hi; ++oy) {
            for (int ox = 0; ox < d.wo; ++ox) {
                real* orow = py + (oy * d.wo + ox) * c;
                for (int ky = 0; ky < d.kh; ++ky) {
                    const real* xrow = px + ((oy * stride + ky) * wp + static_cast<i64>(ox) * stride) * c;
                    const real* wrow = pw + static_cast<i64>(ky) * d.kw * c;
                    for (int kx = 0; kx < d.kw; ++kx)
                        for (int ch = 0; ch < c; ++ch) orow[ch] += xrow[static_cast<i64>(kx) * c + ch] * wrow[static_cast<i64>(kx) * c + ch];
                }
            }
        }
    });
    return out;
}

Tensor k_unpad(const Tensor& xp, int pad, int h, int w) {
    if (pad == 0) return xp;
    const int c = xp.dim(2), wp = xp.dim(1);
    Tensor out({h, w, c});
    const real* px = xp.data();
    real* py = out.mutable_data();
    for (int y = 0; y < h; ++y)
        std::memcpy(py + static_cast<i64>(y) * w * c, px + ((static_cast<i64>(y) + pad) * wp + pad) * c,
                    sizeof(real) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c));
    return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding, int groups) {
    const ConvDims d = conv_dims(x, w, stride, padding, groups);
    if (b.defined() && b.numel() != d.cout) throw ShapeError("conv2d bias shape " + b.shape_str());

    const bool depthwise = groups == d.cin && d.cout == d.cin && d.cg == 1;
    Tensor out;
    std::vector<Tensor> saved_cols;  // general path keeps patch matrices for backward
    Tensor xp = k_pad_zero(x, padding);

    if (depthwise) {
        out = k_dwconv(xp, w, stride, d);
    } else if (d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0 && groups == 1) {
        // 1x1 convolution is a per-pixel linear map.
        Tensor cols = x.reshaped({d.h * d.w, d.cin});
        saved_cols.push_back(cols);
        out = mm_nn(cols, w.reshaped({d.cin, d.cout})).reshaped({d.ho, d.wo, d.cout});
    } else {
        out = Tensor({d.ho, d.wo, d.cout});
        const int og = d.cout / groups;
        real* py = out.mutable_data();
        for (int g = 0; g < groups; ++g) {
            Tensor cols = k_im2col(xp, g, d, stride);
            Tensor wm = k_wmat(w, g, d, groups);
            Tensor og_out = mm_nn(cols, wm);  // (HoWo, Og)
            saved_cols.push_back(cols);
            const real* po = og_out.data();
            for (i64 r = 0; r < static_cast<i64>(d.ho) * d.wo; ++r)
                std::memcpy(py + r * d.cout + static_cast<i64>(g) * og, po + r * og, sizeof(real) * static_cast<std::size_t>(og));
        }
    }

    if (b.defined()) {
        real* py = out.mutable_data();
        const real* pb = b.data();
        const i64 pixels = static_cast<i64>(d.ho) * d.wo;
        for (i64 r = 0; r < pixels; ++r)
            for (int c = 0; c < d.cout; ++c) py[r * d.cout + c] += pb[c];
    }

    maybe_record(out, {&x, &w, &b},
                 [x, w, xp, saved_cols, d, stride, padding, groups, depthwise,
                  has_bias = b.defined()](const Tensor& g) {
        std::vector<Tensor> grads(3);
        const int og = d.cout / groups;
        if (depthwise) {
            const int wp = xp.dim(1);
            const int c = d.cout;
            Tensor dw({d.kh, d.kw, 1, c});
            Tensor dxp(xp.shape());
            real* pdw = dw.mutable_data();
            real* pdx = dxp.mutable_data();
            const real* pg = g.data();
            const real* px = xp.data();
            const real* pw = w.data();
            for (i64 oy = 0; oy < d.ho; ++oy)
                for (int ox = 0; ox < d.wo; ++ox) {
                    const real* grow = pg + (oy * d.wo + ox) * c;
                    for (int ky = 0; ky < d.kh; ++ky)
                        for (int kx = 0; kx < d.kw; ++kx) {
                            const i64 off = ((oy * stride + ky) * wp + static_cast<i64>(ox) * stride + kx) * c;
                            const i64 woff = (static_cast<i64>(ky) * d.kw + kx) * c;
                            for (int ch = 0; ch < c; ++ch) {
                                pdw[woff + ch] += px[off + ch] * grow[ch];
                                pdx[off + ch] += pw[woff + ch] * grow[ch];
                            }
                        }
                }
            grads[0] = k_unpad(dxp, padding, d.h, d.w);
            grads[1] = dw;
        } else if (d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0 && groups == 1) {
            Tensor gm = g.reshaped({d.ho * d.wo, d.cout});
            grads[0] = mm_nt(gm, w.reshaped({d.cin, d.cout})).reshaped({d.h, d.w, d.cin});
            grads[1] = mm_tn(saved_cols[0], gm).reshaped({1, 1, d.cin, d.cout});
        } else {
            Tensor dw({d.kh, d.kw, d.cg, d.cout});
            Tensor dxp(xp.shape());
            real* pdw = dw.mutable_data();
            real* pdx = dxp.mutable_data();
            const real* pg = g.data();
            const int wp = xp.dim(1);
            for (int grp = 0; grp < groups; ++grp) {
                // Slice this group's output gradient into a dense matrix.
                Tensor gg({d.ho * d.wo, og});
                real* pgg = gg.mutable_data();
                for (i64 r = 0; r < static_cast<i64>(d.ho) * d.wo; ++r)
                    std::memcpy(pgg + r * og, pg + r * d.cout + static_cast<i64>(grp) * og,
                                sizeof(real) * static_cast<std::size_t>(og));
                Tensor dwg = mm_tn(saved_cols[static_cast<std::size_t>(grp)], gg);  // (K, Og)
                const real* pdwg = dwg.data();
                for (int ky = 0; ky < d.kh; ++ky)
                    for (int kx = 0; kx < d.kw; ++kx)
                        for (int c = 0; c < d.cg; ++c) {
                            const int row = (ky * d.kw + kx) * d.cg + c;
                            real* dst = pdw + ((static_cast<i64>(ky) * d.kw + kx) * d.cg + c) * d.cout +
                                        static_cast<i64>(grp) * og;
                            for (int o = 0; o < og; ++o) dst[o] += pdwg[static_cast<i64>(row) * og + o];
                        }
                Tensor wm = k_wmat(w, grp, d, groups);
                Tensor dcols = mm_nt(gg, wm);  // (HoWo, K)
                const real* pdc = dcols.data();
                const int c0 = grp * d.cg;
                for (i64 oy = 0; oy < d.ho; ++oy)
                    for (int ox = 0; ox < d.wo; ++ox) {
                        const real* row = pdc + (oy * d.wo + ox) * (d.kh * d.kw * d.cg);
                        int t = 0;
                        for (int ky = 0; ky < d.kh; ++ky) {
                            const i64 iy = oy * stride + ky;
                            for (int kx = 0; kx < d.kw; ++kx) {
                                const i64 ix = static_cast<i64>(ox) * stride + kx;
                                real* dst = pdx + (iy * wp + ix) * d.cin + c0;
                                for (int c = 0; c < d.cg; ++c) dst[c] += row[t++];
                            }
                        }
                    }
            }
            grads[0] = k_unpad(dxp, padding, d.h, d.w);
            grads[1] = dw;
        }
        if (has_bias) {
            Tensor db({d.cout});
            real* pdb = db.mutable_data();
            const real* pg = g.data();
            const i64 pixels = static_cast<i64>(d.ho) * d.wo;
            for (i64 r = 0; r < pixels; ++r)
                for (int c = 0; c < d.cout; ++c) pdb[c] += pg[r * d.cout + c];
            grads[2] = db;
        }
        return grads;
    });
    return out;
}

Tensor conv_transpose2x2(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(0) != 2 || w.dim(1) != 2 || w.dim(2) != x.dim(2))
        throw ShapeError("conv_transpose2x2: bad shapes " + x.shape_str() + ", " + w.shape_str());
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
    Tensor wm = reshape(permute(w, {2, 0, 1, 3}), {cin, 4 * cout});
    Tensor y = linear(reshape(x, {h * wd, cin}), wm, Tensor());  // (HW, 4*Cout)
    auto idx = std::make_shared<std::vector<i64>>();
    idx->resize(static_cast<std::size_t>(4) * h * wd * cout);
    i64 t = 0;
    for (int oy = 0; oy < 2 * h; ++oy)
        for (int ox = 0; ox < 2 * wd; ++ox) {
            const int iy = oy / 2, a = oy % 2, ix = ox / 2, bb = ox % 2;
            const i64 base = (static_cast<i64>(iy) * wd + ix) * (4 * cout) + static_cast<i64>(a * 2 + bb) * cout;
            for (int o = 0; o < cout; ++o) (*idx)[static_cast<std::size_t>(t++)] = base + o;
        }
    Tensor out = gather_flat(y, idx, {2 * h, 2 * wd, cout});
    if (b.defined()) out = add_bias_last(out, b);
    return out;
}

// ---------------------------------------------------------------------------
// Normalization / activation over structured axes

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    const int c = x.dim(x.rank() - 1);
    if (gamma.numel() != c || beta.numel() != c)
        throw ShapeError("layer_norm affine params must have shape (" + std::to_string(c) + ")");
    const i64 rows = x.numel() / c;
    Tensor out(x.shape());
    Tensor xhat(x.shape());
    Tensor rstd_t({static_cast<int>(rows)});
    const real* px = x.data();
    const real* pgm = gamma.data();
    const real* pbt = beta.data();
    real* py = out.mutable_data();
    real* ph = xhat.mutable_data();
    real* pr = rstd_t.mutable_data();
    for (i64 r = 0; r < rows; ++r) {
        const real* row = px + r * c;
        real mu = 0;
        for (int j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<real>(c);
        real var = 0;
        for (int j = 0; j < c; ++j) {
            const real d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<real>(c);
        const real rstd = real(1) / std::sqrt(var + eps);
        pr[r] = rstd;
        for (int j = 0; j < c; ++j) {
            const real h = (row[j] - mu) * rstd;
            ph[r * c + j] = h;
            py[r * c + j] = pgm[j] * h + pbt[j];
        }
    }
    maybe_record(out, {&x, &gamma, &beta}, [xhat, rstd_t, gamma, c, rows](const Tensor& g) {
        Tensor dx(xhat.shape());
        Tensor dgamma({c});
        Tensor dbeta({c});
        const real* pg = g.data();
        const real* ph = xhat.data();
        const real* pr = rstd_t.data();
        const real* pgm = gamma.data();
        real* pdx = dx.mutable_data();
        real* pdg = dgamma.mutable_data();
        real* pdb = dbeta.mutable_data();
        for (i64 r = 0; r < rows; ++r) {
            const real* grow = pg + r * c;
            const real* hrow = ph + r * c;
            real mean_dh = 0, mean_dhh = 0;
            for (int j = 0; j < c; ++j) {
                const real dh = grow[j] * pgm[j];
                mean_dh += dh;
                mean_dhh += dh * hrow[j];
                pdg[j] += grow[j] * hrow[j];
                pdb[j] += grow[j];
            }
            mean_dh /= static_cast<real>(c);
            mean_dhh /= static_cast<real>(c);
            for (int j = 0; j < c; ++j) {
                const real dh = grow[j] * pgm[j];
                pdx[r * c + j] = pr[r] * (dh - mean_dh - hrow[j] * mean_dhh);
            }
        }
        return std::vector<Tensor>{dx, dgamma, dbeta};
    });
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank())
        throw ShapeError("softmax axis " + std::to_string(axis) + " invalid for " + x.shape_str());
    Tensor out = k_softmax(x, axis, /*check_finite=*/true);
    Tensor saved = out;
    maybe_record(out, {&x}, [saved, axis](const Tensor& g) {
        return std::vector<Tensor>{k_softmax_backward(g, saved, axis)};
    });
    return out;
}

// ---------------------------------------------------------------------------
// Resampling / indexing

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 3) throw ShapeError("bilinear_resize expects (H,W,C), got " + x.shape_str());
    if (out_h < 1 || out_w < 1) throw DomainError("bilinear_resize output extents must be positive");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    struct Tap {
        int lo, hi;
        real w_lo, w_hi;
    };
    auto taps_for = [](int in, int out) {
        std::vector<Tap> taps(static_cast<std::size_t>(out));
        for (int o = 0; o < out; ++o) {
            double s = (o + 0.5) * static_cast<double>(in) / out - 0.5;
            s = std::min(std::max(s, 0.0), static_cast<double>(in - 1));
            const int lo = static_cast<int>(std::floor(s));
            const int hi = std::min(lo + 1, in - 1);
            const real f = static_cast<real>(s - lo);
            taps[static_cast<std::size_t>(o)] = {lo, hi, real(1) - f, f};
        }
        return taps;
    };
    auto ytaps = taps_for(h, out_h);
    auto xtaps = taps_for(w, out_w);
    Tensor out({out_h, out_w, c});
    const real* px = x.data();
    real* py = out.mutable_data();
    detail::parallel_for(out_h, [&](i64 lo, i64 hi) {
        for (i64 oy = lo; oy < hi; ++oy) {
            const Tap& ty = ytaps[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
                const Tap& tx = xtaps[static_cast<std::size_t>(ox)];
                real* dst = py + (oy * out_w + ox) * c;
                const real* r00 = px + (static_cast<i64>(ty.lo) * w + tx.lo) * c;
                const real* r01 = px + (static_cast<i64>(ty.lo) * w + tx.hi) * c;
                const real* r10 = px + (static_cast<i64>(ty.hi) * w + tx.lo) * c;
                const real* r11 = px + (static_cast<i64>(ty.hi) * w + tx.hi) * c;
                for (int ch = 0; ch < c; ++ch)
                    dst[ch] = ty.w_lo * (tx.w_lo * r00[ch] + tx.w_hi * r01[ch]) +
                              ty.w_hi * (tx.w_lo * r10[ch] + tx.w_hi * r11[ch]);
            }
        }
    });
    std::vector<int> in_shape = x.shape();
    maybe_record(out, {&x}, [ytaps, xtaps, in_shape, out_h, out_w, c, w](const Tensor& g) {
        Tensor dx(in_shape);
        real* pdx = dx.mutable_data();
        const real* pg = g.data();
        for (int oy = 0; oy < out_h; ++oy) {
            const Tap& ty = ytaps[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
                const Tap& tx = xtaps[static_cast<std::size_t>(ox)];
                const real* grow = pg + (static_cast<i64>(oy) * out_w + ox) * c;
                real* r00 = pdx + (static_cast<i64>(ty.lo) * w + tx.lo) * c;
                real* r01 = pdx + (static_cast<i64>(ty.lo) * w + tx.hi) * c;
                real* r10 = pdx + (static_cast<i64>(ty.hi) * w + tx.lo) * c;
                real* r11 = pdx + (static_cast<i64>(ty.hi) * w + tx.hi) * c;
                for (int ch = 0; ch < c; ++ch) {
                    r00[ch] += ty.w_lo * tx.w_lo * grow[ch];
                    r01[ch] += ty.w_lo * tx.w_hi * grow[ch];
                    r10[ch] += ty.w_hi * tx.w_lo * grow[ch];
                    r11[ch] += ty.w_hi * tx.w_hi * grow[ch];
                }
            }
        }
        return std::vector<Tensor>{dx};
    });
    return out;
}

std::vector<std::pair<int, int>> adaptive_pool_bins(int c_in, int c_out) {
    if (c_out < 1 || c_in < c_out) throw ShapeError("adaptive pooling requires 1 <= c_out <= c_in");
    std::vector<std::pair<int, int>> bins(static_cast<std::size_t>(c_out));
    for (int b = 0; b < c_out; ++b) {
        const int lo = static_cast<int>(static_cast<i64>(b) * c_in / c_out);
        const int hi = static_cast<int>(static_cast<i64>(b + 1) * c_in / c_out);
        bins[static_cast<std::size_t>(b)] = {lo, hi};
    }
    return bins;
}

Tensor adaptive_avg_pool_channels(const Tensor& x, int c_out) {
    const int c_in = x.dim(x.rank() - 1);
    const auto bins = adaptive_pool_bins(c_in, c_out);
    const i64 rows = x.numel() / c_in;
    std::vector<int> out_shape = x.shape();
    out_shape.back() = c_out;
    Tensor out(out_shape);
    const real* px = x.data();
    real* py = out.mutable_data();
    for (i64 r = 0; r < rows; ++r) {
        const real* row = px + r * c_in;
        real* orow = py + r * c_out;
        for (int b = 0; b < c_out; ++b) {
            const auto [lo, hi] = bins[static_cast<std::size_t>(b)];
            real acc = 0;
            for (int j = lo; j < hi; ++j) acc += row[j];
            orow[b] = acc / static_cast<real>(hi - lo);
        }
    }
    std::vector<int> in_shape = x.shape();
    maybe_record(out, {&x}, [bins, in_shape, rows, c_in, c_out](const Tensor& g) {
        Tensor dx(in_shape);
        real* pdx = dx.mutable_data();
        const real* pg = g.data();
        for (i64 r = 0; r < rows; ++r)
            for (int b = 0; b < c_out; ++b) {
                const auto [lo, hi] = bins[static_cast<std::size_t>(b)];
                const real share = pg[r * c_out + b] / static_cast<real>(hi - lo);
                for (int j = lo; j < hi; ++j) pdx[r * c_in + j] += share;
            }
        return std::vector<Tensor>{dx};
    });
    return out;
}

Tensor gather_rows(const Tensor& table, const std::shared_ptr<std::vector<int>>& indices) {
    if (table.rank() != 2) throw ShapeError("gather_rows expects a rank-2 table");
    const int rows = table.dim(0), cols = table.dim(1);
    for (int i : *indices)
        if (i < 0 || i >= rows) throw ShapeError("gather_rows index out of range");
    Tensor out({static_cast<int>(indices->size()), cols});
    const real* pt = table.data();
    real* py = out.mutable_data();
    for (std::size_t r = 0; r < indices->size(); ++r)
        std::memcpy(py + r * static_cast<std::size_t>(cols), pt + static_cast<i64>((*indices)[r]) * cols,
                    sizeof(real) * static_cast<std::size_t>(cols));
    std::vector<int> tshape = table.shape();
    maybe_record(out, {&table}, [indices, tshape, cols](const Tensor& g) {
        Tensor dt(tshape);
        real* pd = dt.mutable_data();
        const real* pg = g.data();
        for (std::size_t r = 0; r < indices->size(); ++r) {
            real* dst = pd + static_cast<i64>((*indices)[r]) * cols;
            const real* src = pg + r * static_cast<std::size_t>(cols);
            for (int c = 0; c < cols; ++c) dst[c] += src[c];
        }
        return std::vector<Tensor>{dt};
    });
    return out;
}

Tensor gather_flat(const Tensor& x, const std::shared_ptr<std::vector<i64>>& indices,
                   std::vector<int> out_shape) {
    i64 n = 1;
    for (int d : out_shape) n *= d;
    if (n != static_cast<i64>(indices->size()))
        throw ShapeError("gather_flat index count does not match output shape");
    const i64 src_n = x.numel();
    for (i64 i : *indices)
        if (i < 0 || i >= src_n) throw ShapeError("gather_flat index out of range");
    Tensor out(out_shape);
    const real* px = x.data();
    real* py = out.mutable_data();
    for (i64 i = 0; i < n; ++i) py[i] = px[(*indices)[static_cast<std::size_t>(i)]];
    std::vector<int> in_shape = x.shape();
    maybe_record(out, {&x}, [indices, in_shape, n](const Tensor& g) {
        Tensor dx(in_shape);
        real* pd = dx.mutable_data();
        const real* pg = g.data();
        for (i64 i = 0; i < n; ++i) pd[(*indices)[static_cast<std::size_t>(i)]] += pg[i];
        return std::vector<Tensor>{dx};
    });
    return out;
}

Tensor tile_axis0(const Tensor& a, int t) {
    if (t < 1) throw DomainError("tile_axis0 repeat count must be >= 1");
    std::vector<int> out_shape = a.shape();
    out_shape[0] *= t;
    Tensor out(out_shape);
    const i64 blk = a.numel();
    real* py = out.mutable_data();
    for (int r = 0; r < t; ++r) std::memcpy(py + static_cast<i64>(r) * blk, a.data(), sizeof(real) * static_cast<std::size_t>(blk));
    std::vector<int> in_shape = a.shape();
    maybe_record(out, {&a}, [in_shape, t, blk](const Tensor& g) {
        Tensor da(in_shape);
        real* pd = da.mutable_data();
        const real* pg = g.data();
        for (int r = 0; r < t; ++r)
            for (i64 i = 0; i < blk; ++i) pd[i] += pg[static_cast<i64>(r) * blk + i];
        return std::vector<Tensor>{da};
    });
    return out;
}

Tensor reflect_pad2d(const Tensor& x, int top, int bottom, int left, int right) {
    if (x.rank() != 3) throw ShapeError("reflect_pad2d expects (H,W,C)");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (top >= h || bottom >= h || left >= w || right >= w || top < 0 || bottom < 0 || left < 0 || right < 0)
        throw ShapeError("reflect_pad2d pads must lie in [0, extent)");
    const int oh = h + top + bottom, ow = w + left + right;
    auto reflect = [](int i, int n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * (n - 1) - i;
        return i;
    };
    std::vector<int> ymap(static_cast<std::size_t>(oh)), xmap(static_cast<std::size_t>(ow));
    for (int y = 0; y < oh; ++y) ymap[static_cast<std::size_t>(y)] = reflect(y - top, h);
    for (int xx = 0; xx < ow; ++xx) xmap[static_cast<std::size_t>(xx)] = reflect(xx - left, w);
    Tensor out({oh, ow, c});
    const real* px = x.data();
    real* py = out.mutable_data();
    for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
            std::memcpy(py + (static_cast<i64>(y) * ow + xx) * c,
                        px + (static_cast<i64>(ymap[static_cast<std::size_t>(y)]) * w + xmap[static_cast<std::size_t>(xx)]) * c,
                        sizeof(real) * static_cast<std::size_t>(c));
    std::vector<int> in_shape = x.shape();
    maybe_record(out, {&x}, [ymap, xmap, in_shape, oh, ow, c, w](const Tensor& g) {
        Tensor dx(in_shape);
        real* pd = dx.mutable_data();
        const real* pg = g.data();
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                real* dst = pd + (static_cast<i64>(ymap[static_cast<std::size_t>(y)]) * w + xmap[static_cast<std::size_t>(xx)]) * c;
                const real* src = pg + (static_cast<i64>(y) * ow + xx) * c;
                for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
        return std::vector<Tensor>{dx};
    });
    return out;
}

Tensor crop2d(const Tensor& x, int row0, int col0, int h, int w) {
    if (x.rank() != 3) throw ShapeError("crop2d expects (H,W,C)");
    if (row0 < 0 || col0 < 0 || h < 1 || w < 1 || row0 + h > x.dim(0) || col0 + w > x.dim(1))
        throw ShapeError("crop2d window out of range for " + x.shape_str());
    const int c = x.dim(2), iw = x.dim(1);
    Tensor out({h, w, c});
    const real* px = x.data();
    real* py = out.mutable_data();
    for (int y = 0; y < h; ++y)
        std::memcpy(py + static_cast<i64>(y) * w * c, px + ((static_cast<i64>(y) + row0) * iw + col0) * c,
                    sizeof(real) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c));
    std::vector<int> in_shape = x.shape();
    maybe_record(out, {&x}, [in_shape, row0, col0, h, w, c, iw](const Tensor& g) {
        Tensor dx(in_shape);
        real* pd = dx.mutable_data();
        const real* pg = g.data();
        for (int y = 0; y < h; ++y)
            std::memcpy(pd + ((static_cast<i64>(y) + row0) * iw + col0) * c, pg + static_cast<i64>(y) * w * c,
                        sizeof(real) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c));
        return std::vector<Tensor>{dx};
    });
    return out;
}

}  // namespace hit
