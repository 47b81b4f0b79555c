#include <doctest.h>

#include <cmath>

#include "hit/bim.hpp"
#include "hit/ops.hpp"
#include "hit/rng.hpp"
#include "oracles.hpp"

using namespace hit;

namespace {

AttentionProjections random_tca_proj(Rng& rng, int cq, int ckv, double alpha_log = 0.0) {
    AttentionProjections p;
    p.wq = oracle::random_tensor(rng, {cq, cq}, 0.3);
    p.bq = oracle::random_tensor(rng, {cq}, 0.1);
    p.wk = oracle::random_tensor(rng, {ckv, ckv}, 0.3);
    p.bk = oracle::random_tensor(rng, {ckv}, 0.1);
    p.wv = oracle::random_tensor(rng, {ckv, ckv}, 0.3);
    p.bv = oracle::random_tensor(rng, {ckv}, 0.1);
    p.alpha_log = Tensor({1}, {static_cast<real>(alpha_log)});
    return p;
}

BimParams random_bim(Rng& rng, int c) {
    BimParams p;
    p.dir_a = random_tca_proj(rng, 2 * c, c);
    p.dir_b = random_tca_proj(rng, c, 2 * c);
    p.seu_w_fine = oracle::random_tensor(rng, {3, 3, 1, c}, 0.3);
    p.seu_b_fine = oracle::random_tensor(rng, {c}, 0.1);
    p.seu_w_coarse = oracle::random_tensor(rng, {3, 3, 1, 2 * c}, 0.3);
    p.seu_b_coarse = oracle::random_tensor(rng, {2 * c}, 0.1);
    p.fuse_w = oracle::random_tensor(rng, {6 * c, c}, 0.3);
    p.fuse_b = oracle::random_tensor(rng, {c}, 0.1);
    return p;
}

// dense oracle: materializes Q-hat, K-hat, V-hat and multiplies explicitly
Tensor tca_oracle(const Tensor& q_src, const Tensor& kv_src, const AttentionProjections& p) {
    const int hw = q_src.dim(0) * q_src.dim(1);
    const int cq = q_src.dim(2), ckv = kv_src.dim(2);
    Tensor q = linear(q_src.reshaped({hw, cq}), p.wq, p.bq);
    Tensor k = linear(kv_src.reshaped({hw, ckv}), p.wk, p.bk);
    Tensor v = linear(kv_src.reshaped({hw, ckv}), p.wv, p.bv);
    const double alpha = std::exp(static_cast<double>(p.alpha_log.data()[0]));

    // scores[cq][ckv] = (1/alpha) sum_t q[t][cq] k[t][ckv]
    Tensor scores({cq, ckv});
    for (int a = 0; a < cq; ++a)
        for (int b = 0; b < ckv; ++b) {
            double acc = 0;
            for (int t = 0; t < hw; ++t)
                acc += static_cast<double>(q.at({t, a})) * static_cast<double>(k.at({t, b}));
            scores.mutable_data()[static_cast<std::int64_t>(a) * ckv + b] = static_cast<real>(acc / alpha);
        }
    // row softmax
    Tensor probs({cq, ckv});
    for (int a = 0; a < cq; ++a) {
        double mx = scores.at({a, 0});
        for (int b = 1; b < ckv; ++b) mx = std::max(mx, static_cast<double>(scores.at({a, b})));
        double z = 0;
        std::vector<double> e(static_cast<std::size_t>(ckv));
        for (int b = 0; b < ckv; ++b) {
            e[static_cast<std::size_t>(b)] = std::exp(static_cast<double>(scores.at({a, b})) - mx);
            z += e[static_cast<std::size_t>(b)];
        }
        for (int b = 0; b < ckv; ++b)
            probs.mutable_data()[static_cast<std::int64_t>(a) * ckv + b] = static_cast<real>(e[static_cast<std::size_t>(b)] / z);
    }
    // out[cq][t] = sum_b probs[cq][b] v[t][b]
    Tensor out({cq, hw});
    for (int a = 0; a < cq; ++a)
        for (int t = 0; t < hw; ++t) {
            double acc = 0;
            for (int b = 0; b < ckv; ++b)
                acc += static_cast<double>(probs.at({a, b})) * static_cast<double>(v.at({t, b}));
            out.mutable_data()[static_cast<std::int64_t>(a) * hw + t] = static_cast<real>(acc);
        }
    return out;
}

Tensor seu_oracle(const Tensor& v_hat, int h, int w, const Tensor& kw, const Tensor& kb) {
    const int c = v_hat.dim(0);
    Tensor sp({h, w, c});
    for (int t = 0; t < h * w; ++t)
        for (int ch = 0; ch < c; ++ch)
            sp.mutable_data()[static_cast<std::int64_t>(t) * c + ch] = v_hat.at({ch, t});
    Tensor conv = oracle::conv2d(sp, kw, kb, 1, 1, c);
    Tensor act = gelu(conv);
    Tensor out({c, h * w});
    for (int t = 0; t < h * w; ++t)
        for (int ch = 0; ch < c; ++ch)
            out.mutable_data()[static_cast<std::int64_t>(ch) * (h * w) + t] = act.at({t / w, t % w, ch});
    return out;
}

}  // namespace

TEST_CASE("single-pixel attention outputs are convex combinations of V-hat") {
    Rng rng(1);
    const int cq = 3, ckv = 4;
    Tensor q_src = oracle::random_tensor(rng, {1, 1, cq});
    Tensor kv_src = oracle::random_tensor(rng, {1, 1, ckv});
    AttentionProjections p = random_tca_proj(rng, cq, ckv);
    Tensor v_hat;
    Tensor out = transposed_cross_attention(q_src, kv_src, p, &v_hat);
    REQUIRE(out.shape() == std::vector<int>{cq, 1});
    double vmin = v_hat.data()[0], vmax = v_hat.data()[0];
    for (std::int64_t i = 0; i < v_hat.numel(); ++i) {
        vmin = std::min(vmin, static_cast<double>(v_hat.data()[i]));
        vmax = std::max(vmax, static_cast<double>(v_hat.data()[i]));
    }
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] >= vmin - 1e-12);
        CHECK(out.data()[i] <= vmax + 1e-12);
    }
}

TEST_CASE("huge alpha drives attention to the channel mean of V-hat") {
    Rng rng(2);
    const int cq = 3, ckv = 4;
    Tensor q_src = oracle::random_tensor(rng, {3, 3, cq});
    Tensor kv_src = oracle::random_tensor(rng, {3, 3, ckv});
    AttentionProjections p = random_tca_proj(rng, cq, ckv, /*alpha_log=*/30.0);
    Tensor v_hat;
    Tensor out = transposed_cross_attention(q_src, kv_src, p, &v_hat);
    for (int t = 0; t < 9; ++t) {
        double mean_v = 0;
        for (int b = 0; b < ckv; ++b) mean_v += v_hat.at({b, t});
        mean_v /= ckv;
        for (int a = 0; a < cq; ++a) CHECK(out.at({a, t}) == doctest::Approx(mean_v).epsilon(1e-10));
    }
}

TEST_CASE("transposed attention equals the dense materialization oracle") {
    Rng rng(3);
    const int c = 2;
    Tensor fine = oracle::random_tensor(rng, {4, 4, c});
    Tensor coarse_resized = oracle::random_tensor(rng, {4, 4, 2 * c});
    AttentionProjections p = random_tca_proj(rng, 2 * c, c, 0.3);
    Tensor out = transposed_cross_attention(coarse_resized, fine, p);
    Tensor expect = tca_oracle(coarse_resized, fine, p);
    CHECK(oracle::max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("attention rows along the key-channel axis are probability vectors") {
    Rng rng(4);
    Tensor fine = oracle::random_tensor(rng, {4, 4, 3});
    Tensor coarse = oracle::random_tensor(rng, {4, 4, 5});
    AttentionProjections p = random_tca_proj(rng, 3, 5);
    Tensor probs;
    transposed_cross_attention(fine, coarse, p, nullptr, &probs);
    REQUIRE(probs.shape() == std::vector<int>{3, 5});
    for (int a = 0; a < 3; ++a) {
        double s = 0;
        for (int b = 0; b < 5; ++b) {
            CHECK(probs.at({a, b}) >= 0.0);
            s += probs.at({a, b});
        }
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("transposed attention rejects mismatched spatial extents") {
    Tensor a({4, 4, 2}), b({2, 2, 4});
    AttentionProjections p;
    CHECK_THROWS_AS(transposed_cross_attention(a, b, p), ContractError);
}

TEST_CASE("seu zero input with zero bias gives zero output") {
    Rng rng(5);
    Tensor v_hat({3, 12});
    Tensor kw = oracle::random_tensor(rng, {3, 3, 1, 3});
    Tensor kb({3});
    Tensor out = seu(v_hat, 3, 4, kw, kb);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == real(0));
}

TEST_CASE("seu with centered delta kernels is elementwise gelu") {
    Rng rng(6);
    const int c = 3;
    Tensor v_hat = oracle::random_tensor(rng, {c, 12});
    Tensor kw({3, 3, 1, c});
    for (int ch = 0; ch < c; ++ch) kw.mutable_data()[(static_cast<std::int64_t>(1) * 3 + 1) * c + ch] = real(1);
    Tensor kb({c});
    Tensor out = seu(v_hat, 3, 4, kw, kb);
    Tensor expect = gelu(v_hat);
    CHECK(oracle::max_abs_diff(out, expect) < 1e-14);
}

TEST_CASE("seu equals the reshape+conv oracle") {
    Rng rng(7);
    const int c = 4;
    Tensor v_hat = oracle::random_tensor(rng, {c, 12});
    Tensor kw = oracle::random_tensor(rng, {3, 3, 1, c}, 0.3);
    Tensor kb = oracle::random_tensor(rng, {c}, 0.1);
    CHECK(oracle::max_abs_diff(seu(v_hat, 3, 4, kw, kb), seu_oracle(v_hat, 3, 4, kw, kb)) < 1e-13);
}

TEST_CASE("bim_forward output shape is (H', W', C')") {
    Rng rng(8);
    for (int c : {2, 4}) {
        Tensor fine = oracle::random_tensor(rng, {8, 8, c});
        Tensor coarse = oracle::random_tensor(rng, {4, 4, 2 * c});
        BimParams p = random_bim(rng, c);
        Tensor out = bim_forward(CrossScalePair::make(fine, coarse), p);
        CHECK(out.shape() == std::vector<int>{8, 8, c});
        CHECK(out.all_finite());
    }
}

TEST_CASE("zero fuse conv gives zero bim output") {
    Rng rng(9);
    const int c = 2;
    Tensor fine = oracle::random_tensor(rng, {4, 4, c});
    Tensor coarse = oracle::random_tensor(rng, {2, 2, 2 * c});
    BimParams p = random_bim(rng, c);
    p.fuse_w = Tensor({6 * c, c});
    p.fuse_b = Tensor({c});
    Tensor out = bim_forward(CrossScalePair::make(fine, coarse), p);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == real(0));
}

TEST_CASE("bim_forward equals the stage-by-stage oracle") {
    Rng rng(10);
    const int c = 4, h = 8, w = 8;
    Tensor fine = oracle::random_tensor(rng, {h, w, c});
    Tensor coarse = oracle::random_tensor(rng, {h / 2, w / 2, 2 * c});
    BimParams p = random_bim(rng, c);
    CrossScalePair pair = CrossScalePair::make(fine, coarse);
    Tensor out = bim_forward(pair, p);

    // direction A: queries from resized coarse, keys/values (and SEU) from fine
    Tensor att_a = tca_oracle(pair.coarse_resized, fine, p.dir_a);
    Tensor v_fine = transpose(linear(fine.reshaped({h * w, c}), p.dir_a.wv, p.dir_a.bv));
    Tensor seu_a = seu_oracle(v_fine, h, w, p.seu_w_fine, p.seu_b_fine);
    // direction B: roles swapped
    Tensor att_b = tca_oracle(fine, pair.coarse_resized, p.dir_b);
    Tensor v_coarse = transpose(linear(pair.coarse_resized.reshaped({h * w, 2 * c}), p.dir_b.wv, p.dir_b.bv));
    Tensor seu_b = seu_oracle(v_coarse, h, w, p.seu_w_coarse, p.seu_b_coarse);

    Tensor both = concat({att_a, seu_a, att_b, seu_b}, 0);  // (6C', HW)
    Tensor expect = reshape(linear(transpose(both), p.fuse_w, p.fuse_b), {h, w, c});
    CHECK(oracle::max_abs_diff(out, expect) < 1e-11);
}

TEST_CASE("bim_forward commutes with spatial permutations when SEU kernels are deltas") {
    Rng rng(11);
    const int c = 2, h = 4, w = 4, hw = h * w;
    BimParams p = random_bim(rng, c);
    // centered delta kernels: attention is spatially global, SEU elementwise
    p.seu_w_fine = Tensor({3, 3, 1, c});
    for (int ch = 0; ch < c; ++ch)
        p.seu_w_fine.mutable_data()[(static_cast<std::int64_t>(1) * 3 + 1) * c + ch] = real(1);
    p.seu_w_coarse = Tensor({3, 3, 1, 2 * c});
    for (int ch = 0; ch < 2 * c; ++ch)
        p.seu_w_coarse.mutable_data()[(static_cast<std::int64_t>(1) * 3 + 1) * 2 * c + ch] = real(1);

    Tensor fine = oracle::random_tensor(rng, {h, w, c});
    Tensor coarse_resized = oracle::random_tensor(rng, {h, w, 2 * c});

    // a fixed spatial shuffle
    std::vector<int> perm(static_cast<std::size_t>(hw));
    for (int i = 0; i < hw; ++i) perm[static_cast<std::size_t>(i)] = (i * 7 + 3) % hw;
    auto permute_pixels = [&](const Tensor& x) {
        const int ch = x.dim(2);
        Tensor out(x.shape());
        for (int i = 0; i < hw; ++i)
            for (int k = 0; k < ch; ++k)
                out.mutable_data()[static_cast<std::int64_t>(i) * ch + k] =
                    x.data()[static_cast<std::int64_t>(perm[static_cast<std::size_t>(i)]) * ch + k];
        return out;
    };

    CrossScalePair pair;
    pair.fine = fine;
    pair.coarse_resized = coarse_resized;
    Tensor base = bim_forward(pair, p);

    CrossScalePair shuffled;
    shuffled.fine = permute_pixels(fine);
    shuffled.coarse_resized = permute_pixels(coarse_resized);
    Tensor out = bim_forward(shuffled, p);
    CHECK(oracle::max_abs_diff(out, permute_pixels(base)) < 1e-11);
}

TEST_CASE("bim_flops anchors and structure") {
    FlopReport r = bim_flops(64, 64, 16);
    CHECK(r.total_macs == 5373952ULL);  // 64*64*16*(18+64)
    CHECK(bim_flops(10, 20, 1).total_macs == 22ULL * 10 * 20);
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const long long h = 1 + rng.index(128);
        const long long w = 1 + rng.index(128);
        const long long c = 1 + rng.index(64);
        FlopReport f = bim_flops(h, w, c);
        CHECK(f.total_macs == 2 * (f.seu_macs + f.sa_macs));
        CHECK(f.total_macs ==
              static_cast<unsigned long long>(h) * static_cast<unsigned long long>(w) *
                  static_cast<unsigned long long>(c) * (18 + 4 * static_cast<unsigned long long>(c)));
    }
    CHECK_THROWS_AS(bim_flops(0, 4, 4), DomainError);
    CHECK_THROWS_AS(bim_flops(4, -1, 4), DomainError);
}

TEST_CASE("instrumented MAC counter matches the closed form in its declared scope") {
    CHECK(measure_bim_core_macs(8, 8, 4, 1) == bim_flops(8, 8, 4).total_macs);
    CHECK(measure_bim_core_macs(16, 16, 8, 2) == bim_flops(16, 16, 8).total_macs);
}

TEST_CASE("cross-scale pair validates halving") {
    Tensor fine({8, 8, 2});
    CHECK_THROWS_AS(CrossScalePair::make(fine, Tensor({3, 4, 4})), ShapeError);
    CHECK_THROWS_AS(CrossScalePair::make(fine, Tensor({4, 4, 3})), ShapeError);
}
