#include "hit/wim.hpp"

#include <cstring>
#include <fstream>

#include "hit/ops.hpp"

namespace hit {

ExtractorConfig ExtractorConfig::preset() {
    ExtractorConfig cfg;
    cfg.stages = {{16, 1}, {32, 2}, {32, 1}, {32, 1}};
    return cfg;
}

int ExtractorConfig::out_channels() const {
    if (stages.empty()) throw ConfigError("extractor needs at least one stage");
    return stages.back().out_channels;
}

int ExtractorConfig::total_stride() const {
    int s = 1;
    for (const auto& st : stages) s *= st.stride;
    return s;
}

void ExtractorConfig::validate() const {
    if (stages.empty()) throw ConfigError("extractor needs at least one stage");
    for (const auto& st : stages) {
        if (st.out_channels < 1) throw ConfigError("extractor stage channels must be >= 1");
        if (st.stride < 1) throw ConfigError("extractor stage stride must be >= 1");
    }
}

FeatureMap extract_high_freq(const Tensor& image, const ExtractorConfig& cfg, const ExtractorParams& params) {
    cfg.validate();
    if (image.rank() != 3 || image.dim(2) != 3)
        throw ShapeError("extractor expects an (H,W,3) image, got " + image.shape_str());
    if (params.w.size() != cfg.stages.size())
        throw ConfigError("extractor parameter count does not match configuration");
    const int h = image.dim(0), w = image.dim(1);

    Tensor x = image;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& st = cfg.stages[i];
        const int cin = x.dim(2);
        Tensor y = gelu(conv2d(x, params.w[i], params.b[i], st.stride, 1, 1));
        if (st.stride == 1 && st.out_channels == cin) y = add(y, x);
        x = y;
    }
    if (x.dim(0) != h || x.dim(1) != w) x = bilinear_resize(x, h, w);
    return x;
}

FeatureMap inject(const FeatureMap& f0, const FeatureMap& fd, int m) {
    if (f0.rank() != 3 || fd.rank() != 3) throw ShapeError("inject expects (H,W,C) maps");
    if (f0.dim(0) != fd.dim(0) || f0.dim(1) != fd.dim(1))
        throw ShapeError("inject: spatial extents differ, " + f0.shape_str() + " vs " + fd.shape_str());
    const int c = f0.dim(2);
    WindowStack w0 = window_partition(f0, m);
    WindowStack wd = window_partition(fd, m);
    Tensor inter = concat({w0.windows, wd.windows}, 2);  // (nw, m^2, C+C_d)
    Tensor pooled = adaptive_avg_pool_channels(inter, c);
    return window_merge(WindowStack{pooled, w0.source_h, w0.source_w, m});
}

namespace {
constexpr char kFeatureMagic[4] = {'H', 'I', 'T', 'F'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("feature file truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

Tensor load_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open feature file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kFeatureMagic, 4) != 0)
        throw IoError("not a HITF feature file: " + path);
    const std::uint32_t h = read_u32(is), w = read_u32(is), cd = read_u32(is);
    if (h == 0 || w == 0 || cd == 0) throw IoError("HITF header has zero extent: " + path);
    const std::size_t n = static_cast<std::size_t>(h) * w * cd;
    std::vector<float> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw IoError("feature file truncated: " + path);
    std::vector<real> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<real>(raw[i]);
    return Tensor({static_cast<int>(h), static_cast<int>(w), static_cast<int>(cd)}, std::move(values));
}

void save_feature_file(const std::string& path, const Tensor& features) {
    if (features.rank() != 3) throw ShapeError("feature file stores (H,W,C_d) maps");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write feature file: " + path);
    os.write(kFeatureMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(features.dim(0)));
    write_u32(os, static_cast<std::uint32_t>(features.dim(1)));
    write_u32(os, static_cast<std::uint32_t>(features.dim(2)));
    const real* p = features.data();
    const std::int64_t n = features.numel();
    std::vector<float> raw(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) raw[static_cast<std::size_t>(i)] = static_cast<float>(p[i]);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!os) throw IoError("failed writing feature file: " + path);
}

}  // namespace hit
