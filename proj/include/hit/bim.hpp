#pragma once

#include <cstdint>

#include "hit/nn.hpp"
#include "hit/tensor.hpp"

namespace hit {

// Adjacent-scale feature pair feeding one BIM instance. coarse is exactly
// half the fine extents; coarse_resized is its x2 bilinear upsampling.
struct CrossScalePair {
    FeatureMap fine;            // (H',W',C')
    FeatureMap coarse;          // (H'/2,W'/2,2C')
    FeatureMap coarse_resized;  // (H',W',2C')

    static CrossScalePair make(const FeatureMap& fine, const FeatureMap& coarse);
};

struct FlopReport {
    unsigned long long seu_macs = 0;    // 9*H*W*C (one direction's depthwise pass)
    unsigned long long sa_macs = 0;     // 2*H*W*C^2 (one direction's attention products)
    unsigned long long total_macs = 0;  // 2*(seu+sa) == H*W*C*(18+4C)
};

// Closed-form complexity accounting; exact integer arithmetic.
FlopReport bim_flops(long long h, long long w, long long c);

// Runs the BIM core with kernel-level MAC counting and returns the count.
// Scope matches the closed form: both attention directions plus SEU, both
// sources carrying c channels; projections and the fuse conv excluded.
unsigned long long measure_bim_core_macs(int h, int w, int c, std::uint64_t seed);

// Transposed (channel-axis) scaled-dot-product cross attention:
// Q̂:(Cq,HW) from q_src, K̂:(HW,Ckv) and V̂:(Ckv,HW) from kv_src,
// softmax(Q̂K̂/alpha)·V̂ with softmax along the key-channel axis.
// v_hat_out / probs_out expose intermediates (SEU input, normalization tests).
Tensor transposed_cross_attention(const FeatureMap& q_src, const FeatureMap& kv_src,
                                  const AttentionProjections& proj, Tensor* v_hat_out = nullptr,
                                  Tensor* probs_out = nullptr);

// Spatial Enhancement Unit: reshape the (C,HW) value projection to spatial
// form, depthwise 3x3 (zero pad 1), GELU, reshape back.
Tensor seu(const Tensor& v_hat, int h, int w, const Tensor& dw_kernel, const Tensor& dw_bias);

struct BimParams {
    AttentionProjections dir_a;  // queries from coarse_resized, keys/values from fine
    AttentionProjections dir_b;  // queries from fine, keys/values from coarse_resized
    Tensor seu_w_fine, seu_b_fine;      // (3,3,1,C')
    Tensor seu_w_coarse, seu_b_coarse;  // (3,3,1,2C')
    Tensor fuse_w, fuse_b;              // (6C' -> C') 1x1 fuse
};

// Direction A = [Att(Q̂_{l+1},K̂_l,V̂_l), SEU(V̂_l)], direction B likewise with
// roles swapped; both concatenated (6C' channels), fused 1x1 to C'.
FeatureMap bim_forward(const CrossScalePair& pair, const BimParams& params, AttnDebug* debug = nullptr);

}  // namespace hit
