#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hit/tensor.hpp"

namespace hit {

// Synthetic degradation generators; stand-ins for benchmark corruptions.
// Output clamped to [0,1]; the seed fully determines the field.
struct Degradation {
    enum class Kind { gaussian_noise, rain_streaks, box_blur };
    Kind kind = Kind::gaussian_noise;
    double sigma = 0.1;       // gaussian_noise
    int count = 0;            // rain_streaks
    int length = 0;           // rain_streaks
    double angle = 0.0;       // rain_streaks, degrees from vertical
    double intensity = 0.0;   // rain_streaks
    int radius = 0;           // box_blur
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static Degradation from_json(const nlohmann::json& j, const std::string& path);
};

Tensor degrade(const Tensor& clean, const Degradation& d);

// Binary PPM (P6, 8-bit), bit-exact round trips.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

// Paired dataset layout: degraded/ and clean/ with matching filenames.
// Throws ConfigError listing orphans when the pairing is incomplete.
std::vector<std::pair<std::string, std::string>> list_paired_dataset(const std::string& degraded_dir,
                                                                     const std::string& clean_dir);

}  // namespace hit
