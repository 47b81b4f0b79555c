#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hit/model.hpp"
#include "hit/rng.hpp"
#include "hit/tensor.hpp"

namespace hit {

struct TrainConfig {
    double lr_init = 2e-4;
    double lr_final = 1e-6;
    long long total_steps = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.02;
    double adam_eps = 1e-8;
    double eps_char = 1e-3;
    int batch_size = 1;
    int patch_size = 64;
    std::uint64_t seed = 0;
    double flip_prob = 0.5;
    bool charbonnier_per_pixel = false;  // per-element-mean variant; default is the global norm
    int val_interval = 50;
    std::vector<std::pair<long long, int>> progressive_schedule;  // (step, patch_size), default off

    void validate() const;
};

// Global-norm Charbonnier: sqrt(||pred - target||^2 + eps^2) over all
// pixels and channels jointly. per_pixel_mean averages the elementwise
// variant sqrt(d_i^2 + eps^2) instead.
Tensor charbonnier(const Tensor& pred, const Tensor& target, double eps, bool per_pixel_mean = false);

double cosine_lr(long long step, const TrainConfig& cfg);

struct AdamWState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long long t = 0;
};

// Decoupled-weight-decay update with bias-corrected moments. params, grads
// and state vectors are index-aligned; undefined gradients mean zero.
void adamw_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg);

// Identical horizontal/vertical flips on both images; decisions from rng.
ImagePair augment(const ImagePair& pair, Rng& rng, double flip_prob);

struct TraceRow {
    long long step = 0;
    double lr = 0;
    double loss = 0;
    std::optional<double> val_psnr;
};

struct TrainResult {
    std::vector<TraceRow> trace;
};

// sample -> crop -> augment -> forward -> charbonnier -> backward -> adamw,
// fully determined by (seed, config, data). Aborts with NumericError naming
// the step index when the loss goes non-finite.
TrainResult train(Model& model, const std::vector<ImagePair>& dataset, const TrainConfig& cfg);

// CSV trace: header step,lr,loss,val_psnr; val_psnr blank between validations.
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace hit
