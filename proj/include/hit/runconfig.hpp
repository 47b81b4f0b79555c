#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "hit/data.hpp"
#include "hit/model.hpp"
#include "hit/training.hpp"

namespace hit {

// Canonical JSON run description. Parsing is strict: unknown keys are
// rejected with their field path, and the canonical serialization
// round-trips to an identical document.
struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;
    TrainConfig train;
    std::string clean_dir;
    std::string degraded_dir;                // empty when degradation is synthetic
    std::optional<Degradation> degradation;  // applied to clean images when set
    std::string checkpoint_out = "model.hitc";
    std::string trace_out = "trace.csv";

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    // Referenced input paths must exist; called before running.
    void validate_paths() const;
};

}  // namespace hit
