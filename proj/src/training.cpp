#include "hit/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hit/metrics.hpp"
#include "hit/ops.hpp"

namespace hit {

void TrainConfig::validate() const {
    if (!(lr_final < lr_init)) throw ConfigError("lr_final must be < lr_init");
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (!(eps_char > 0)) throw ConfigError("eps_char must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
    if (flip_prob < 0 || flip_prob > 1) throw ConfigError("flip_prob must lie in [0,1]");
    if (val_interval < 1) throw ConfigError("val_interval must be >= 1");
    for (const auto& [step, ps] : progressive_schedule)
        if (step < 0 || ps < 1) throw ConfigError("progressive_schedule entries must be (step>=0, patch>=1)");
}

Tensor charbonnier(const Tensor& pred, const Tensor& target, double eps, bool per_pixel_mean) {
    if (!pred.same_shape(target))
        throw ContractError("charbonnier: extents differ, " + pred.shape_str() + " vs " + target.shape_str());
    Tensor d = sub(pred, target);
    const real e2 = static_cast<real>(eps * eps);
    if (per_pixel_mean) return mean(sqrt(add_scalar(mul(d, d), e2)));
    return sqrt(add_scalar(sum(mul(d, d)), e2));
}

double cosine_lr(long long step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        throw DomainError("cosine_lr step " + std::to_string(step) + " outside [0, " +
                          std::to_string(cfg.total_steps) + "]");
    // endpoints pinned: cos(pi * t) at t in {0,1} is exact mathematically but
    // not through a rounded pi
    if (step == 0) return cfg.lr_init;
    if (step == cfg.total_steps) return cfg.lr_final;
    const double t = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(3.14159265358979323846 * t));
}

void adamw_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeError("adamw_step: params/grads size mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Tensor(params[i]->shape());
            state.v[i] = Tensor(params[i]->shape());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adamw_step: state size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p_old = *params[i];
        const std::int64_t n = p_old.numel();
        if (grads[i].defined() && !grads[i].same_shape(p_old))
            throw ShapeError("adamw_step: gradient shape " + grads[i].shape_str() + " != parameter shape " +
                             p_old.shape_str());
        Tensor m_new(state.m[i].shape());
        Tensor v_new(state.v[i].shape());
        Tensor p_new(p_old.shape());
        const real* g = grads[i].defined() ? grads[i].data() : nullptr;
        const real* mo = state.m[i].data();
        const real* vo = state.v[i].data();
        const real* po = p_old.data();
        real* mn = m_new.mutable_data();
        real* vn = v_new.mutable_data();
        real* pn = p_new.mutable_data();
        for (std::int64_t j = 0; j < n; ++j) {
            const double gj = g ? static_cast<double>(g[j]) : 0.0;
            const double mj = cfg.beta1 * static_cast<double>(mo[j]) + (1.0 - cfg.beta1) * gj;
            const double vj = cfg.beta2 * static_cast<double>(vo[j]) + (1.0 - cfg.beta2) * gj * gj;
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            const double decayed = static_cast<double>(po[j]) * (1.0 - lr * cfg.weight_decay);
            pn[j] = static_cast<real>(decayed - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
            mn[j] = static_cast<real>(mj);
            vn[j] = static_cast<real>(vj);
        }
        p_new.set_requires_grad(true);
        *params[i] = p_new;
        state.m[i] = m_new;
        state.v[i] = v_new;
    }
}

namespace {

Tensor flip_image(const Tensor& img, bool horizontal, bool vertical) {
    if (!horizontal && !vertical) return img;
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Tensor out(img.shape());
    const real* px = img.data();
    real* py = out.mutable_data();
    for (int y = 0; y < h; ++y) {
        const int sy = vertical ? h - 1 - y : y;
        for (int x = 0; x < w; ++x) {
            const int sx = horizontal ? w - 1 - x : x;
            const real* src = px + (static_cast<std::int64_t>(sy) * w + sx) * c;
            real* dst = py + (static_cast<std::int64_t>(y) * w + x) * c;
            for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
    }
    return out;
}

Tensor crop_image(const Tensor& img, int r0, int c0, int h, int w) {
    Tensor out({h, w, img.dim(2)});
    const int c = img.dim(2), iw = img.dim(1);
    const real* px = img.data();
    real* py = out.mutable_data();
    for (int y = 0; y < h; ++y)
        std::memcpy(py + static_cast<std::int64_t>(y) * w * c,
                    px + ((static_cast<std::int64_t>(y) + r0) * iw + c0) * c,
                    sizeof(real) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c));
    return out;
}

}  // namespace

ImagePair augment(const ImagePair& pair, Rng& rng, double flip_prob) {
    const bool horizontal = rng.bernoulli(flip_prob);
    const bool vertical = rng.bernoulli(flip_prob);
    return ImagePair{flip_image(pair.degraded, horizontal, vertical),
                     flip_image(pair.clean, horizontal, vertical)};
}

TrainResult train(Model& model, const std::vector<ImagePair>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw ContractError("train: dataset is empty");
    for (const auto& pair : dataset)
        if (!pair.degraded.same_shape(pair.clean))
            throw ContractError("train: degraded/clean extents differ");

    TrainResult result;
    AdamWState state;

    std::vector<Tensor*> params;
    model.for_each_param([&params](const std::string&, Tensor& t) { params.push_back(&t); });

    for (long long step = 0; step < cfg.total_steps; ++step) {
        int patch = cfg.patch_size;
        for (const auto& [at, ps] : cfg.progressive_schedule)
            if (step >= at) patch = ps;

        Rng step_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
        const double lr = cosine_lr(step, cfg);

        Tape tape;
        Tensor batch_loss;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto sample_idx = static_cast<std::size_t>(step_rng.index(static_cast<std::int64_t>(dataset.size())));
            ImagePair sample = dataset[sample_idx];
            const int h = sample.degraded.dim(0), w = sample.degraded.dim(1);
            const int ph = std::min(patch, h), pw = std::min(patch, w);
            if (ph < h || pw < w) {
                const int r0 = static_cast<int>(step_rng.index(h - ph + 1));
                const int c0 = static_cast<int>(step_rng.index(w - pw + 1));
                sample.degraded = crop_image(sample.degraded, r0, c0, ph, pw);
                sample.clean = crop_image(sample.clean, r0, c0, ph, pw);
            }
            sample = augment(sample, step_rng, cfg.flip_prob);

            auto [restored, residual] = model.forward(sample.degraded);
            Tensor loss = charbonnier(restored, sample.clean, cfg.eps_char, cfg.charbonnier_per_pixel);
            batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
        }
        if (cfg.batch_size > 1) batch_loss = mul_scalar(batch_loss, real(1) / static_cast<real>(cfg.batch_size));

        const double loss_value = static_cast<double>(batch_loss.item());
        if (!std::isfinite(loss_value))
            throw NumericError("non-finite loss at step " + std::to_string(step));

        GradMap grads = tape.backward(batch_loss);
        std::vector<Tensor> grad_list;
        grad_list.reserve(params.size());
        for (Tensor* p : params) grad_list.push_back(grads.grad(*p));
        adamw_step(params, grad_list, state, lr, cfg);

        TraceRow row{step, lr, loss_value, std::nullopt};
        if ((step + 1) % cfg.val_interval == 0 || step + 1 == cfg.total_steps) {
            auto [restored, residual] = model.forward(dataset[0].degraded);
            row.val_psnr = psnr(clamp01(restored), dataset[0].clean, 1.0);
        }
        result.trace.push_back(row);
    }
    return result;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write trace: " + path);
    os.precision(17);
    os << "step,lr,loss,val_psnr\n";
    for (const TraceRow& row : trace) {
        os << row.step << ',' << row.lr << ',' << row.loss << ',';
        if (row.val_psnr) os << *row.val_psnr;
        os << '\n';
    }
    if (!os) throw IoError("failed writing trace: " + path);
}

}  // namespace hit
