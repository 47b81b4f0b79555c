#include <doctest.h>

#include <cmath>
#include <cstring>

#include "hit/nn.hpp"
#include "hit/ops.hpp"
#include "hit/rng.hpp"
#include "oracles.hpp"

using namespace hit;

namespace {

AttentionProjections random_attn(Rng& rng, int c, int heads, int m, double wstd = 0.3) {
    AttentionProjections p;
    p.wq = oracle::random_tensor(rng, {c, c}, wstd);
    p.bq = oracle::random_tensor(rng, {c}, 0.1);
    p.wk = oracle::random_tensor(rng, {c, c}, wstd);
    p.bk = oracle::random_tensor(rng, {c}, 0.1);
    p.wv = oracle::random_tensor(rng, {c, c}, wstd);
    p.bv = oracle::random_tensor(rng, {c}, 0.1);
    p.wo = oracle::random_tensor(rng, {c, c}, wstd);
    p.bo = oracle::random_tensor(rng, {c}, 0.1);
    p.rel_pos_bias = oracle::random_tensor(rng, {(2 * m - 1) * (2 * m - 1), heads}, 0.3);
    p.heads = heads;
    return p;
}

FfnParams random_ffn(Rng& rng, int c, int expand) {
    FfnParams p;
    p.w1 = oracle::random_tensor(rng, {c, expand * c}, 0.3);
    p.b1 = oracle::random_tensor(rng, {expand * c}, 0.1);
    p.dw = oracle::random_tensor(rng, {3, 3, 1, expand * c}, 0.3);
    p.db = oracle::random_tensor(rng, {expand * c}, 0.1);
    p.w2 = oracle::random_tensor(rng, {expand * c, c}, 0.3);
    p.b2 = oracle::random_tensor(rng, {c}, 0.1);
    p.expand = expand;
    return p;
}

BlockParams random_block(Rng& rng, int c, int heads, int m, int expand, bool attention) {
    BlockParams p;
    p.use_attention = attention;
    p.ln1.gamma = Tensor::full({c}, real(1));
    p.ln1.beta = oracle::random_tensor(rng, {c}, 0.1);
    p.attn = random_attn(rng, c, heads, m);
    p.ln2.gamma = Tensor::full({c}, real(1));
    p.ln2.beta = oracle::random_tensor(rng, {c}, 0.1);
    p.ffn = random_ffn(rng, c, expand);
    return p;
}

BlockParams zero_block(int c, int heads, int m, int expand) {
    BlockParams p;
    p.use_attention = true;
    p.ln1.gamma = Tensor({c});
    p.ln1.beta = Tensor({c});
    p.attn.wq = Tensor({c, c});
    p.attn.bq = Tensor({c});
    p.attn.wk = Tensor({c, c});
    p.attn.bk = Tensor({c});
    p.attn.wv = Tensor({c, c});
    p.attn.bv = Tensor({c});
    p.attn.wo = Tensor({c, c});
    p.attn.bo = Tensor({c});
    p.attn.rel_pos_bias = Tensor({(2 * m - 1) * (2 * m - 1), heads});
    p.attn.heads = heads;
    p.ln2.gamma = Tensor({c});
    p.ln2.beta = Tensor({c});
    p.ffn.w1 = Tensor({c, expand * c});
    p.ffn.b1 = Tensor({expand * c});
    p.ffn.dw = Tensor({3, 3, 1, expand * c});
    p.ffn.db = Tensor({expand * c});
    p.ffn.w2 = Tensor({expand * c, c});
    p.ffn.b2 = Tensor({c});
    p.ffn.expand = expand;
    return p;
}

Tensor cyclic_shift_rows(const Tensor& x, int shift) {
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out(x.shape());
    for (int y = 0; y < h; ++y) {
        const int sy = ((y - shift) % h + h) % h;
        std::memcpy(out.mutable_data() + static_cast<std::int64_t>(y) * w * c,
                    x.data() + static_cast<std::int64_t>(sy) * w * c,
                    sizeof(real) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c));
    }
    return out;
}

}  // namespace

TEST_CASE("window partition shape arithmetic") {
    Rng rng(1);
    Tensor x = oracle::random_tensor(rng, {16, 16, 3});
    WindowStack ws = window_partition(x, 8);
    CHECK(ws.windows.shape() == std::vector<int>{4, 64, 3});
}

TEST_CASE("single window equals the flattened input") {
    Rng rng(2);
    Tensor x = oracle::random_tensor(rng, {6, 6, 2});
    WindowStack ws = window_partition(x, 6);
    CHECK(ws.windows.shape() == std::vector<int>{1, 36, 2});
    CHECK(oracle::bit_equal(ws.windows.reshaped({6, 6, 2}), x));
}

TEST_CASE("merge(partition(x)) is the identity, bit-exact") {
    Rng rng(3);
    Tensor x = oracle::random_tensor(rng, {24, 16, 2});
    CHECK(oracle::bit_equal(window_merge(window_partition(x, 8)), x));
}

TEST_CASE("non-divisible extents raise a partition error") {
    Tensor x({10, 16, 2});
    CHECK_THROWS_AS(window_partition(x, 8), ShapeError);
}

TEST_CASE("wmsa with one token per window is the value path") {
    Rng rng(5);
    const int c = 4;
    Tensor x = oracle::random_tensor(rng, {2, 2, c});
    AttentionProjections p = random_attn(rng, c, 2, 1);
    WindowStack out = wmsa(window_partition(x, 1), p);

    // softmax of a singleton is 1, so out = (x wv + bv) wo + bo per token
    Tensor v = linear(reshape(x, {4, c}), p.wv, p.bv);
    Tensor expect = linear(v, p.wo, p.bo);
    CHECK(oracle::max_abs_diff(out.windows.reshaped({4, c}), expect) < 1e-12);
}

TEST_CASE("identical tokens with zero bias table get identical outputs") {
    Rng rng(6);
    const int c = 4;
    Tensor x({2, 2, c});
    Tensor token = oracle::random_tensor(rng, {c});
    Tensor other = oracle::random_tensor(rng, {c});
    for (int ch = 0; ch < c; ++ch) {
        x.mutable_data()[0 * c + ch] = token.data()[ch];
        x.mutable_data()[1 * c + ch] = token.data()[ch];
        x.mutable_data()[2 * c + ch] = other.data()[ch];
        x.mutable_data()[3 * c + ch] = other.data()[ch] + real(1);
    }
    AttentionProjections p = random_attn(rng, c, 2, 2);
    p.rel_pos_bias = Tensor({9, 2});  // zero bias keeps token symmetry intact
    WindowStack out = wmsa(window_partition(x, 2), p);
    for (int ch = 0; ch < c; ++ch)
        CHECK(out.windows.at({0, 0, ch}) == doctest::Approx(out.windows.at({0, 1, ch})).epsilon(1e-13));
}

TEST_CASE("stacked windows equal independent per-window evaluation") {
    Rng rng(7);
    const int c = 4, m = 2;
    Tensor x = oracle::random_tensor(rng, {2, 4, c});  // two windows side by side
    AttentionProjections p = random_attn(rng, c, 2, m);
    WindowStack both = wmsa(window_partition(x, m), p);

    for (int wi = 0; wi < 2; ++wi) {
        Tensor piece = crop2d(x, 0, wi * m, m, m);
        WindowStack solo = wmsa(window_partition(piece, m), p);
        for (int t = 0; t < m * m; ++t)
            for (int ch = 0; ch < c; ++ch)
                CHECK(both.windows.at({wi, t, ch}) ==
                      doctest::Approx(solo.windows.at({0, t, ch})).epsilon(1e-13));
    }
}

TEST_CASE("wmsa is window-local") {
    Rng rng(8);
    const int c = 4, m = 2;
    Tensor x = oracle::random_tensor(rng, {4, 4, c});
    AttentionProjections p = random_attn(rng, c, 2, m);
    Tensor base = window_merge(wmsa(window_partition(x, m), p));

    Tensor mutated(x.shape());
    std::memcpy(mutated.mutable_data(), x.data(), sizeof(real) * static_cast<std::size_t>(x.numel()));
    for (int y = 0; y < m; ++y)
        for (int xx = 0; xx < m; ++xx)
            for (int ch = 0; ch < c; ++ch)
                mutated.mutable_data()[(static_cast<std::int64_t>(y) * 4 + xx) * c + ch] = 0;
    Tensor changed = window_merge(wmsa(window_partition(mutated, m), p));
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) {
            if (y < m && xx < m) continue;  // the perturbed window itself
            for (int ch = 0; ch < c; ++ch) CHECK(base.at({y, xx, ch}) == changed.at({y, xx, ch}));
        }
}

TEST_CASE("window-aligned cyclic translation permutes wmsa output identically") {
    Rng rng(9);
    const int c = 4, m = 2;
    Tensor x = oracle::random_tensor(rng, {6, 4, c});
    AttentionProjections p = random_attn(rng, c, 2, m);
    Tensor y = window_merge(wmsa(window_partition(x, m), p));
    Tensor y_shifted = window_merge(wmsa(window_partition(cyclic_shift_rows(x, m), m), p));
    CHECK(oracle::bit_equal(y_shifted, cyclic_shift_rows(y, m)));
}

TEST_CASE("attention rows are probability vectors") {
    Rng rng(10);
    const int c = 4, m = 2;
    Tensor x = oracle::random_tensor(rng, {4, 4, c});
    AttentionProjections p = random_attn(rng, c, 2, m);
    AttnDebug dbg;
    wmsa(window_partition(x, m), p, &dbg);
    REQUIRE(dbg.probs.size() == 1);
    const Tensor& probs = dbg.probs[0];  // (nw*heads, m^2, m^2)
    for (int b = 0; b < probs.dim(0); ++b)
        for (int i = 0; i < probs.dim(1); ++i) {
            double s = 0;
            for (int j = 0; j < probs.dim(2); ++j) {
                const double v = probs.at({b, i, j});
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::fabs(s - 1.0) < 1e-12);
        }
}

TEST_CASE("head-divisibility violation raises a config error") {
    Rng rng(20);
    const int c = 4, m = 2;
    Tensor x = oracle::random_tensor(rng, {4, 4, c});
    AttentionProjections p = random_attn(rng, c, 3, m);  // 4 % 3 != 0
    CHECK_THROWS_AS(wmsa(window_partition(x, m), p), ConfigError);
}

TEST_CASE("ffn zero weights give zero output") {
    Rng rng(11);
    const int c = 3, e = 2;
    FfnParams p;
    p.w1 = Tensor({c, e * c});
    p.b1 = Tensor({e * c});
    p.dw = Tensor({3, 3, 1, e * c});
    p.db = Tensor({e * c});
    p.w2 = Tensor({e * c, c});
    p.b2 = Tensor({c});
    p.expand = e;
    Tensor tokens = oracle::random_tensor(rng, {12, c});
    Tensor out = ffn(tokens, 3, 4, p);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == real(0));
}

TEST_CASE("ffn with delta kernel and identity slices reduces to gelu") {
    Rng rng(12);
    const int c = 3, e = 2;
    FfnParams p;
    p.w1 = Tensor({c, e * c});
    for (int i = 0; i < c; ++i) p.w1.mutable_data()[static_cast<std::int64_t>(i) * e * c + i] = real(1);
    p.b1 = Tensor({e * c});
    p.dw = Tensor({3, 3, 1, e * c});
    for (int ch = 0; ch < e * c; ++ch)
        p.dw.mutable_data()[(static_cast<std::int64_t>(1) * 3 + 1) * e * c + ch] = real(1);  // centered delta
    p.db = Tensor({e * c});
    p.w2 = Tensor({e * c, c});
    for (int i = 0; i < c; ++i) p.w2.mutable_data()[static_cast<std::int64_t>(i) * c + i] = real(1);
    p.b2 = Tensor({c});
    p.expand = e;

    Tensor tokens = oracle::random_tensor(rng, {12, c});
    Tensor out = ffn(tokens, 3, 4, p);
    Tensor expect = gelu(tokens);
    CHECK(oracle::max_abs_diff(out, expect) < 1e-14);
}

TEST_CASE("ffn equals the staged composition oracle") {
    Rng rng(13);
    const int c = 3, e = 2, h = 3, w = 4;
    FfnParams p = random_ffn(rng, c, e);
    Tensor tokens = oracle::random_tensor(rng, {h * w, c});
    Tensor out = ffn(tokens, h, w, p);

    Tensor a = linear(tokens, p.w1, p.b1);
    Tensor sp = a.reshaped({h, w, e * c});
    Tensor dc = oracle::conv2d(sp, p.dw, p.db, 1, 1, e * c);
    Tensor act = gelu(dc);
    Tensor expect = linear(act.reshaped({h * w, e * c}), p.w2, p.b2);
    CHECK(oracle::max_abs_diff(out, expect) < 1e-13);
}

TEST_CASE("ffn rejects inconsistent spatial metadata") {
    Tensor tokens({12, 3});
    FfnParams p;
    CHECK_THROWS_AS(ffn(tokens, 5, 5, p), ContractError);
}

TEST_CASE("transformer block with all-zero weights is the identity, bit-exact") {
    Rng rng(14);
    const int c = 4, m = 2;
    BlockParams p = zero_block(c, 2, m, 2);
    Tensor x = oracle::random_tensor(rng, {4, 4, c});
    CHECK(oracle::bit_equal(transformer_block(x, m, p), x));
    p.use_attention = false;
    CHECK(oracle::bit_equal(transformer_block(x, m, p), x));
}

TEST_CASE("use_attention=false ignores the attention weights") {
    Rng rng(15);
    const int c = 4, m = 2;
    BlockParams p = random_block(rng, c, 2, m, 2, /*attention=*/false);
    Tensor x = oracle::random_tensor(rng, {4, 4, c});
    Tensor base = transformer_block(x, m, p);
    p.attn = random_attn(rng, c, 2, m);  // completely different projections
    CHECK(oracle::bit_equal(transformer_block(x, m, p), base));
}

TEST_CASE("transformer block equals manual composition of its sub-ops") {
    Rng rng(16);
    const int c = 4, m = 2, h = 4, w = 4;
    BlockParams p = random_block(rng, c, 2, m, 2, /*attention=*/true);
    Tensor x = oracle::random_tensor(rng, {h, w, c});
    Tensor out = transformer_block(x, m, p);

    Tensor t = layer_norm(x, p.ln1.gamma, p.ln1.beta, kLayerNormEps);
    Tensor att = window_merge(wmsa(window_partition(t, m), p.attn));
    Tensor mid = add(x, att);
    Tensor t2 = layer_norm(mid, p.ln2.gamma, p.ln2.beta, kLayerNormEps);
    Tensor f = ffn(reshape(t2, {h * w, c}), h, w, p.ffn);
    Tensor expect = add(mid, reshape(f, {h, w, c}));
    CHECK(oracle::bit_equal(out, expect));
}
