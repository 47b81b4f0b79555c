#include "hit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hit/rng.hpp"
#include "json_util.hpp"

namespace hit {

namespace fs = std::filesystem;
using detail::json;

void Degradation::validate() const {
    switch (kind) {
        case Kind::gaussian_noise:
            if (sigma < 0) throw DomainError("gaussian_noise sigma must be >= 0");
            break;
        case Kind::rain_streaks:
            if (count < 0 || length < 0 || intensity < 0)
                throw DomainError("rain_streaks count/length/intensity must be >= 0");
            break;
        case Kind::box_blur:
            if (radius < 0) throw DomainError("box_blur radius must be >= 0");
            break;
    }
}

json Degradation::to_json() const {
    json j;
    switch (kind) {
        case Kind::gaussian_noise:
            j = json{{"kind", "gaussian_noise"}, {"sigma", sigma}};
            break;
        case Kind::rain_streaks:
            j = json{{"kind", "rain_streaks"}, {"count", count}, {"length", length}, {"angle", angle},
                     {"intensity", intensity}};
            break;
        case Kind::box_blur:
            j = json{{"kind", "box_blur"}, {"radius", radius}};
            break;
    }
    j["seed"] = seed;
    return j;
}

Degradation Degradation::from_json(const json& j, const std::string& path) {
    Degradation d;
    const auto kind = detail::get_field<std::string>(j, "kind", path);
    if (kind == "gaussian_noise") {
        detail::reject_unknown_keys(j, {"kind", "sigma", "seed"}, path);
        d.kind = Kind::gaussian_noise;
        d.sigma = detail::get_field<double>(j, "sigma", path);
    } else if (kind == "rain_streaks") {
        detail::reject_unknown_keys(j, {"kind", "count", "length", "angle", "intensity", "seed"}, path);
        d.kind = Kind::rain_streaks;
        d.count = detail::get_field<int>(j, "count", path);
        d.length = detail::get_field<int>(j, "length", path);
        d.angle = detail::get_field_or(j, "angle", path, 0.0);
        d.intensity = detail::get_field<double>(j, "intensity", path);
    } else if (kind == "box_blur") {
        detail::reject_unknown_keys(j, {"kind", "radius", "seed"}, path);
        d.kind = Kind::box_blur;
        d.radius = detail::get_field<int>(j, "radius", path);
    } else {
        throw ConfigError(path + ".kind: unknown degradation '" + kind + "'");
    }
    d.seed = detail::get_field_or<std::uint64_t>(j, "seed", path, 0);
    d.validate();
    return d;
}

namespace {

real clamp_unit(real v) { return std::min(real(1), std::max(real(0), v)); }

Tensor apply_gaussian_noise(const Tensor& clean, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    Tensor out(clean.shape());
    const real* px = clean.data();
    real* py = out.mutable_data();
    const std::int64_t n = clean.numel();
    for (std::int64_t i = 0; i < n; ++i)
        py[i] = clamp_unit(px[i] + static_cast<real>(rng.normal(0.0, sigma)));
    return out;
}

Tensor apply_rain_streaks(const Tensor& clean, const Degradation& d) {
    Rng rng(d.seed);
    const int h = clean.dim(0), w = clean.dim(1), c = clean.dim(2);
    Tensor field({h, w, 1});
    real* pf = field.mutable_data();
    const double rad = d.angle * 3.14159265358979323846 / 180.0;
    const double dy = std::cos(rad), dx = std::sin(rad);
    for (int s = 0; s < d.count; ++s) {
        double y = rng.uniform(0.0, static_cast<double>(h));
        double x = rng.uniform(0.0, static_cast<double>(w));
        for (int t = 0; t < d.length; ++t) {
            const int iy = static_cast<int>(y), ix = static_cast<int>(x);
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                pf[static_cast<std::int64_t>(iy) * w + ix] += static_cast<real>(d.intensity);
            y += dy;
            x += dx;
        }
    }
    Tensor out(clean.shape());
    const real* px = clean.data();
    real* py = out.mutable_data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const real add = pf[static_cast<std::int64_t>(y) * w + x];
            for (int ch = 0; ch < c; ++ch) {
                const std::int64_t i = (static_cast<std::int64_t>(y) * w + x) * c + ch;
                py[i] = clamp_unit(px[i] + add);
            }
        }
    return out;
}

Tensor apply_box_blur(const Tensor& clean, int radius) {
    if (radius == 0) return clean;
    const int h = clean.dim(0), w = clean.dim(1), c = clean.dim(2);
    Tensor out(clean.shape());
    const real* px = clean.data();
    real* py = out.mutable_data();
    const int k = 2 * radius + 1;
    const real inv = real(1) / static_cast<real>(k * k);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                real acc = 0;
                for (int oy = -radius; oy <= radius; ++oy)
                    for (int ox = -radius; ox <= radius; ++ox) {
                        const int sy = std::clamp(y + oy, 0, h - 1);
                        const int sx = std::clamp(x + ox, 0, w - 1);
                        acc += px[(static_cast<std::int64_t>(sy) * w + sx) * c + ch];
                    }
                py[(static_cast<std::int64_t>(y) * w + x) * c + ch] = clamp_unit(acc * inv);
            }
    return out;
}

}  // namespace

Tensor degrade(const Tensor& clean, const Degradation& d) {
    d.validate();
    if (clean.rank() != 3) throw ShapeError("degrade expects an (H,W,C) image");
    switch (d.kind) {
        case Degradation::Kind::gaussian_noise:
            if (d.sigma == 0.0) return clean;
            return apply_gaussian_noise(clean, d.sigma, d.seed);
        case Degradation::Kind::rain_streaks:
            return apply_rain_streaks(clean, d);
        case Degradation::Kind::box_blur:
            return apply_box_blur(clean, d.radius);
    }
    throw DomainError("unreachable degradation kind");
}

// ---------------------------------------------------------------------------
// PPM I/O

namespace {
int read_ppm_token(std::istream& is) {
    // Skips whitespace and '#' comments between header fields.
    for (;;) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(ch)) {
            is.get();
        } else {
            break;
        }
    }
    int value = 0;
    if (!(is >> value)) throw IoError("malformed PPM header");
    return value;
}
}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image: " + path);
    char magic[2];
    is.read(magic, 2);
    if (!is || magic[0] != 'P' || magic[1] != '6') throw IoError("not a binary PPM (P6) file: " + path);
    const int w = read_ppm_token(is);
    const int h = read_ppm_token(is);
    const int maxval = read_ppm_token(is);
    if (w < 1 || h < 1) throw IoError("PPM has non-positive extents: " + path);
    if (maxval != 255) throw IoError("only 8-bit PPM supported (maxval 255), got " + std::to_string(maxval));
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw IoError("PPM payload truncated: " + path);
    Tensor img({h, w, 3});
    real* p = img.mutable_data();
    for (std::size_t i = 0; i < raw.size(); ++i) p[i] = static_cast<real>(raw[i]) / real(255);
    return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("write_ppm expects (H,W,3)");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path);
    os << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    const real* p = image.data();
    const std::int64_t n = image.numel();
    std::vector<unsigned char> raw(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = std::min(1.0, std::max(0.0, static_cast<double>(p[i])));
        raw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("failed writing image: " + path);
}

std::vector<std::pair<std::string, std::string>> list_paired_dataset(const std::string& degraded_dir,
                                                                     const std::string& clean_dir) {
    if (!fs::is_directory(degraded_dir)) throw ConfigError("not a directory: " + degraded_dir);
    if (!fs::is_directory(clean_dir)) throw ConfigError("not a directory: " + clean_dir);
    std::vector<std::string> degraded, clean;
    for (const auto& e : fs::directory_iterator(degraded_dir))
        if (e.is_regular_file()) degraded.push_back(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(clean_dir))
        if (e.is_regular_file()) clean.push_back(e.path().filename().string());
    std::sort(degraded.begin(), degraded.end());
    std::sort(clean.begin(), clean.end());

    std::vector<std::string> orphans;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t i = 0, j = 0;
    while (i < degraded.size() || j < clean.size()) {
        if (i < degraded.size() && j < clean.size() && degraded[i] == clean[j]) {
            pairs.emplace_back((fs::path(degraded_dir) / degraded[i]).string(),
                               (fs::path(clean_dir) / clean[j]).string());
            ++i;
            ++j;
        } else if (j >= clean.size() || (i < degraded.size() && degraded[i] < clean[j])) {
            orphans.push_back("degraded/" + degraded[i++]);
        } else {
            orphans.push_back("clean/" + clean[j++]);
        }
    }
    if (!orphans.empty()) {
        std::ostringstream os;
        os << "unpaired files:";
        for (const auto& o : orphans) os << " " << o;
        throw ConfigError(os.str());
    }
    if (pairs.empty()) throw ConfigError("dataset is empty: " + degraded_dir);
    return pairs;
}

}  // namespace hit
