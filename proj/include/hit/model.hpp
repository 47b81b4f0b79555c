#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hit/bim.hpp"
#include "hit/nn.hpp"
#include "hit/wim.hpp"

namespace hit {

struct ModelConfig {
    int base_channels = 16;
    int window_size = 8;
    int levels = 4;
    std::vector<int> block_counts{2, 2, 2, 2};
    std::vector<int> head_counts{1, 2, 4, 8};
    bool encoder_attention = false;
    int ffn_expand = 4;
    ExtractorConfig extractor = ExtractorConfig::preset();

    static ModelConfig hit_t();
    static ModelConfig hit_b();
    static ModelConfig hit_micro();
    static ModelConfig variant(const std::string& name);

    int channels_at(int level) const { return base_channels << level; }
    // Minimum spatial multiple the U-shape needs (window size at the deepest level).
    int pad_multiple() const { return window_size << (levels - 1); }

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j, const std::string& path);
};

// Degraded input, ground truth, and the restoration pair. Values live in
// [0,1]; restored() clamps only at evaluation time.
struct ImagePair {
    Tensor degraded;  // I
    Tensor clean;     // I'
};

class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed);

    // Returns (restored, residual): restored = image + residual, unclamped;
    // extents always equal the input extents (internal reflect-pad + crop).
    std::pair<Tensor, Tensor> forward(const Tensor& image) const;

    long long count_params() const;
    void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;

    const ModelConfig& config() const { return cfg_; }
    int bim_count() const { return static_cast<int>(bims_.size()); }

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    Model() = default;

    ModelConfig cfg_;
    Tensor in_w_, in_b_;
    ExtractorParams extractor_;
    std::vector<std::vector<BlockParams>> enc_;
    std::vector<Tensor> down_w_, down_b_;
    std::vector<Tensor> up_w_, up_b_;
    std::vector<BimParams> bims_;
    std::vector<Tensor> skipfuse_w_, skipfuse_b_;
    std::vector<std::vector<BlockParams>> dec_;
    Tensor out_w_, out_b_;
};

constexpr std::uint32_t kCheckpointVersion = 1;

// Reflect-pads (bottom/right) until both extents are multiples of `mult`;
// multiple passes handle pads larger than the current extent.
Tensor pad_to_multiple(const Tensor& x, int mult);

}  // namespace hit
