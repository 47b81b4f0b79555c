#include "hit/nn.hpp"

#include <cmath>

namespace hit {

namespace {
using i64 = std::int64_t;

std::shared_ptr<std::vector<i64>> partition_indices(int h, int w, int c, int m, bool inverse) {
    const int tiles_y = h / m, tiles_x = w / m;
    auto idx = std::make_shared<std::vector<i64>>(static_cast<std::size_t>(h) * w * c);
    i64 t = 0;
    for (int ty = 0; ty < tiles_y; ++ty)
        for (int tx = 0; tx < tiles_x; ++tx)
            for (int iy = 0; iy < m; ++iy)
                for (int ix = 0; ix < m; ++ix) {
                    const i64 src = ((static_cast<i64>(ty) * m + iy) * w + (static_cast<i64>(tx) * m + ix)) * c;
                    for (int ch = 0; ch < c; ++ch) {
                        if (inverse)
                            (*idx)[static_cast<std::size_t>(src + ch)] = t++;
                        else
                            (*idx)[static_cast<std::size_t>(t++)] = src + ch;
                    }
                }
    return idx;
}
}  // namespace

WindowStack window_partition(const FeatureMap& x, int m) {
    if (x.rank() != 3) throw ShapeError("window_partition expects (H,W,C), got " + x.shape_str());
    if (m < 1) throw DomainError("window size must be positive");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h % m != 0 || w % m != 0)
        throw ShapeError("window_partition: extents " + x.shape_str() + " not divisible by window size " +
                         std::to_string(m));
    auto idx = partition_indices(h, w, c, m, false);
    Tensor windows = gather_flat(x, idx, {(h / m) * (w / m), m * m, c});
    return WindowStack{windows, h, w, m};
}

FeatureMap window_merge(const WindowStack& ws) {
    const int h = ws.source_h, w = ws.source_w, m = ws.m;
    const int c = ws.windows.dim(2);
    if (ws.windows.dim(0) != (h / m) * (w / m) || ws.windows.dim(1) != m * m)
        throw ShapeError("window_merge: inconsistent stack " + ws.windows.shape_str());
    auto idx = partition_indices(h, w, c, m, true);
    return gather_flat(ws.windows, idx, {h, w, c});
}

std::shared_ptr<std::vector<int>> relative_position_index(int m) {
    const int n = m * m;
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        const int ry = i / m, rx = i % m;
        for (int j = 0; j < n; ++j) {
            const int qy = j / m, qx = j % m;
            const int dy = ry - qy + m - 1;
            const int dx = rx - qx + m - 1;
            (*idx)[static_cast<std::size_t>(i) * n + j] = dy * (2 * m - 1) + dx;
        }
    }
    return idx;
}

WindowStack wmsa(const WindowStack& x, const AttentionProjections& proj, AttnDebug* debug) {
    const int nw = x.windows.dim(0), n = x.windows.dim(1), c = x.windows.dim(2);
    const int heads = proj.heads;
    if (proj.wq.dim(0) != c)
        throw ConfigError("wmsa: projection channels " + proj.wq.shape_str() + " do not match input " +
                          x.windows.shape_str());
    if (c % heads != 0)
        throw ConfigError("wmsa: channels " + std::to_string(c) + " not divisible by heads " + std::to_string(heads));
    const int d = c / heads;

    Tensor tokens = reshape(x.windows, {nw * n, c});
    Tensor q = linear(tokens, proj.wq, proj.bq);
    Tensor k = linear(tokens, proj.wk, proj.bk);
    Tensor v = linear(tokens, proj.wv, proj.bv);

    auto to_heads = [&](const Tensor& t) {
        return reshape(permute(reshape(t, {nw, n, heads, d}), {0, 2, 1, 3}), {nw * heads, n, d});
    };
    Tensor qh = to_heads(q);
    Tensor kh = to_heads(k);
    Tensor vh = to_heads(v);

    Tensor scores = mul_scalar(bmm_nt(qh, kh), static_cast<real>(1.0 / std::sqrt(static_cast<double>(d))));
    if (proj.rel_pos_bias.defined()) {
        // ((2m-1)^2, heads) table -> (heads, n, n), tiled across windows.
        Tensor bias = gather_rows(proj.rel_pos_bias, relative_position_index(x.m));     // (n*n, heads)
        Tensor bias_h = permute(reshape(bias, {n, n, heads}), {2, 0, 1});               // (heads, n, n)
        scores = add(scores, tile_axis0(bias_h, nw));
    }
    Tensor probs = softmax(scores, 2);
    if (debug) debug->probs.push_back(probs);

    Tensor ctx = bmm(probs, vh);  // (nw*heads, n, d)
    Tensor merged = reshape(permute(reshape(ctx, {nw, heads, n, d}), {0, 2, 1, 3}), {nw * n, c});
    Tensor out = linear(merged, proj.wo, proj.bo);
    return WindowStack{reshape(out, {nw, n, c}), x.source_h, x.source_w, x.m};
}

Tensor ffn(const Tensor& tokens, int h, int w, const FfnParams& p) {
    if (tokens.rank() != 2) throw ContractError("ffn expects (N,C) tokens, got " + tokens.shape_str());
    const int n = tokens.dim(0), c = tokens.dim(1);
    if (h < 1 || w < 1 || h * w != n)
        throw ContractError("ffn spatial metadata " + std::to_string(h) + "x" + std::to_string(w) +
                            " does not cover " + std::to_string(n) + " tokens");
    const int ec = p.w1.dim(1);
    Tensor a = linear(tokens, p.w1, p.b1);                     // (N, eC)
    Tensor sp = reshape(a, {h, w, ec});
    Tensor dcv = conv2d(sp, p.dw, p.db, 1, 1, ec);             // depthwise 3x3
    Tensor act = gelu(dcv);
    Tensor flat = reshape(act, {n, ec});
    Tensor out = linear(flat, p.w2, p.b2);                     // (N, C)
    (void)c;
    return out;
}

FeatureMap transformer_block(const FeatureMap& x, int m, const BlockParams& p, AttnDebug* debug) {
    Tensor cur = x;
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (p.use_attention) {
        Tensor t = layer_norm(cur, p.ln1.gamma, p.ln1.beta, kLayerNormEps);
        WindowStack ws = window_partition(t, m);
        WindowStack att = wmsa(ws, p.attn, debug);
        cur = add(cur, window_merge(att));
    }
    Tensor t2 = layer_norm(cur, p.ln2.gamma, p.ln2.beta, kLayerNormEps);
    Tensor f = ffn(reshape(t2, {h * w, c}), h, w, p.ffn);
    return add(cur, reshape(f, {h, w, c}));
}

}  // namespace hit
