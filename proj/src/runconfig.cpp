#include "hit/runconfig.hpp"

#include <filesystem>
#include <fstream>

#include "json_util.hpp"

namespace hit {

namespace fs = std::filesystem;
using detail::json;

namespace {

TrainConfig train_from_json(const json& j, const std::string& path) {
    detail::reject_unknown_keys(j, {"lr_init", "lr_final", "total_steps", "betas", "weight_decay",
                                    "eps_char", "batch_size", "patch_size", "flip_prob", "val_interval",
                                    "charbonnier_per_pixel", "progressive_schedule"},
                                path);
    TrainConfig t;
    t.lr_init = detail::get_field_or(j, "lr_init", path, t.lr_init);
    t.lr_final = detail::get_field_or(j, "lr_final", path, t.lr_final);
    t.total_steps = detail::get_field_or(j, "total_steps", path, t.total_steps);
    if (j.contains("betas")) {
        auto betas = detail::get_field<std::vector<double>>(j, "betas", path);
        if (betas.size() != 2) throw ConfigError(path + ".betas: expected [beta1, beta2]");
        t.beta1 = betas[0];
        t.beta2 = betas[1];
    }
    t.weight_decay = detail::get_field_or(j, "weight_decay", path, t.weight_decay);
    t.eps_char = detail::get_field_or(j, "eps_char", path, t.eps_char);
    t.batch_size = detail::get_field_or(j, "batch_size", path, t.batch_size);
    t.patch_size = detail::get_field_or(j, "patch_size", path, t.patch_size);
    t.flip_prob = detail::get_field_or(j, "flip_prob", path, t.flip_prob);
    t.val_interval = detail::get_field_or(j, "val_interval", path, t.val_interval);
    t.charbonnier_per_pixel = detail::get_field_or(j, "charbonnier_per_pixel", path, t.charbonnier_per_pixel);
    if (j.contains("progressive_schedule")) {
        auto sched = detail::get_field<std::vector<std::vector<json>>>(j, "progressive_schedule", path);
        for (const auto& entry : sched) {
            if (entry.size() != 2)
                throw ConfigError(path + ".progressive_schedule: entries are [step, patch_size]");
            t.progressive_schedule.emplace_back(entry[0].get<long long>(), entry[1].get<int>());
        }
    }
    t.validate();
    return t;
}

json train_to_json(const TrainConfig& t) {
    json sched = json::array();
    for (const auto& [step, ps] : t.progressive_schedule) sched.push_back(json::array({step, ps}));
    return json{{"lr_init", t.lr_init},
                {"lr_final", t.lr_final},
                {"total_steps", t.total_steps},
                {"betas", json::array({t.beta1, t.beta2})},
                {"weight_decay", t.weight_decay},
                {"eps_char", t.eps_char},
                {"batch_size", t.batch_size},
                {"patch_size", t.patch_size},
                {"flip_prob", t.flip_prob},
                {"val_interval", t.val_interval},
                {"charbonnier_per_pixel", t.charbonnier_per_pixel},
                {"progressive_schedule", sched}};
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return parse_json(j);
}

RunConfig RunConfig::parse_json(const json& j) {
    detail::reject_unknown_keys(j, {"seed", "model", "train", "data", "out"}, "config");
    RunConfig cfg;
    cfg.seed = detail::get_field_or<std::uint64_t>(j, "seed", "config", 0);
    if (j.contains("model")) cfg.model = ModelConfig::from_json(j.at("model"), "config.model");
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"), "config.train");
    cfg.train.seed = cfg.seed;

    if (!j.contains("data")) throw ConfigError("config.data: missing");
    const json& d = j.at("data");
    detail::reject_unknown_keys(d, {"clean_dir", "degraded_dir", "degradation"}, "config.data");
    cfg.clean_dir = detail::get_field<std::string>(d, "clean_dir", "config.data");
    cfg.degraded_dir = detail::get_field_or<std::string>(d, "degraded_dir", "config.data", "");
    if (d.contains("degradation")) {
        cfg.degradation = Degradation::from_json(d.at("degradation"), "config.data.degradation");
        if (!d.at("degradation").contains("seed"))
            cfg.degradation->seed = mix_seed(cfg.seed, 0xD15EA5EULL);
    }
    if (cfg.degraded_dir.empty() && !cfg.degradation)
        throw ConfigError("config.data: needs degraded_dir or degradation");
    if (!cfg.degraded_dir.empty() && cfg.degradation)
        throw ConfigError("config.data: degraded_dir and degradation are mutually exclusive");

    if (j.contains("out")) {
        const json& o = j.at("out");
        detail::reject_unknown_keys(o, {"checkpoint", "trace"}, "config.out");
        cfg.checkpoint_out = detail::get_field_or<std::string>(o, "checkpoint", "config.out", cfg.checkpoint_out);
        cfg.trace_out = detail::get_field_or<std::string>(o, "trace", "config.out", cfg.trace_out);
    }
    cfg.model.validate();
    return cfg;
}

json RunConfig::to_json() const {
    json data{{"clean_dir", clean_dir}};
    if (!degraded_dir.empty()) data["degraded_dir"] = degraded_dir;
    if (degradation) data["degradation"] = degradation->to_json();
    return json{{"seed", seed},
                {"model", model.to_json()},
                {"train", train_to_json(train)},
                {"data", data},
                {"out", json{{"checkpoint", checkpoint_out}, {"trace", trace_out}}}};
}

void RunConfig::validate_paths() const {
    if (!fs::exists(clean_dir)) throw ConfigError("config.data.clean_dir: path does not exist: " + clean_dir);
    if (!degraded_dir.empty() && !fs::exists(degraded_dir))
        throw ConfigError("config.data.degraded_dir: path does not exist: " + degraded_dir);
}

}  // namespace hit
