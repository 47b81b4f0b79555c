#pragma once

#include <vector>

#include "hit/ops.hpp"
#include "hit/tensor.hpp"

namespace hit {

// Feature maps are rank-3 (H,W,C) tensors throughout.
using FeatureMap = Tensor;

// Non-overlapping m x m spatial tiles in row-major tile order; tokens within
// a window in row-major order. merge(partition(x)) == x bit-exactly.
struct WindowStack {
    Tensor windows;  // (H*W/m^2, m^2, C)
    int source_h = 0;
    int source_w = 0;
    int m = 0;
};

WindowStack window_partition(const FeatureMap& x, int m);
FeatureMap window_merge(const WindowStack& ws);

// Projection weights for one attention instance. W-MSA fills wq..wo and
// rel_pos_bias; the BIM transposed attention fills wq..bv and alpha_log
// (alpha = exp(alpha_log) keeps the learnable scale positive).
struct AttentionProjections {
    Tensor wq, bq, wk, bk, wv, bv;
    Tensor wo, bo;
    Tensor rel_pos_bias;  // ((2m-1)^2, heads)
    Tensor alpha_log;     // shape {1}
    int heads = 1;
};

// Relative-coordinate index table shared by all windows of size m:
// entry (i*m^2+j) addresses rel_pos_bias row for token pair (i, j).
std::shared_ptr<std::vector<int>> relative_position_index(int m);

// Captures attention probabilities for inspection in tests.
struct AttnDebug {
    std::vector<Tensor> probs;
};

// Per-window multi-head self-attention with relative position bias; no
// cross-window mixing.
WindowStack wmsa(const WindowStack& x, const AttentionProjections& proj, AttnDebug* debug = nullptr);

struct FfnParams {
    Tensor w1, b1;  // C -> expand*C
    Tensor dw, db;  // (3,3,1,expand*C) depthwise
    Tensor w2, b2;  // expand*C -> C
    int expand = 4;
};

// Linear expand -> depthwise 3x3 -> GELU -> linear project. tokens:(N,C)
// with N == h*w spatial metadata.
Tensor ffn(const Tensor& tokens, int h, int w, const FfnParams& p);

struct LayerNormParams {
    Tensor gamma, beta;
};

struct BlockParams {
    LayerNormParams ln1;
    AttentionProjections attn;
    LayerNormParams ln2;
    FfnParams ffn;
    bool use_attention = true;
};

constexpr real kLayerNormEps = real(1e-6);

// Eq-style pre-norm block: x += W-MSA(LN(x)); x += FFN(LN(x)). With
// use_attention=false only the FFN sub-layer runs (encoder configuration).
FeatureMap transformer_block(const FeatureMap& x, int m, const BlockParams& p, AttnDebug* debug = nullptr);

}  // namespace hit
