#pragma once

#include <string>
#include <vector>

#include "hit/nn.hpp"
#include "hit/tensor.hpp"

namespace hit {

// Small trainable CNN standing in for a pre-trained extractor. Every stage is
// a 3x3 conv + GELU; equal-shape stride-1 stages get a residual connection;
// one bilinear resize at the end restores the input extents.
struct ExtractorStage {
    int out_channels = 0;
    int stride = 1;
};

struct ExtractorConfig {
    std::vector<ExtractorStage> stages;

    static ExtractorConfig preset();  // 16 -> 32 -> 32 -> 32, strides 1,2,2,1
    int out_channels() const;
    int total_stride() const;
    void validate() const;
};

struct ExtractorParams {
    std::vector<Tensor> w;  // (3,3,Cin,Cout) per stage
    std::vector<Tensor> b;
};

// (H,W,3) image in [0,1] -> (H,W,C_d) feature map.
FeatureMap extract_high_freq(const Tensor& image, const ExtractorConfig& cfg, const ExtractorParams& params);

// Split-align-fuse: window partition both maps, concatenate same-index
// windows on channels, adaptive-average-pool C+C_d back to C, merge windows.
FeatureMap inject(const FeatureMap& f0, const FeatureMap& fd, int m);

// Extractor-feature import/export: "HITF" magic, u32 H, W, C_d, then
// H*W*C_d 32-bit little-endian reals.
Tensor load_feature_file(const std::string& path);
void save_feature_file(const std::string& path, const Tensor& features);

}  // namespace hit
