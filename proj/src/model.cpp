#include "hit/model.hpp"

#include <cstring>
#include <fstream>

#include "hit/ops.hpp"
#include "hit/rng.hpp"
#include "json_util.hpp"

namespace hit {

using detail::json;

// ---------------------------------------------------------------------------
// Config

ModelConfig ModelConfig::hit_t() { return ModelConfig{}; }

ModelConfig ModelConfig::hit_b() {
    ModelConfig c;
    c.base_channels = 32;
    c.block_counts = {1, 2, 8, 8};
    return c;
}

ModelConfig ModelConfig::hit_micro() {
    ModelConfig c;
    c.base_channels = 8;
    c.window_size = 4;
    c.block_counts = {1, 1, 1, 1};
    return c;
}

ModelConfig ModelConfig::variant(const std::string& name) {
    if (name == "hit-t") return hit_t();
    if (name == "hit-b") return hit_b();
    if (name == "hit-micro") return hit_micro();
    throw ConfigError("unknown variant '" + name + "' (expected hit-t, hit-b or hit-micro)");
}

void ModelConfig::validate() const {
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (window_size < 1) throw ConfigError("window_size must be >= 1");
    if (levels < 1) throw ConfigError("levels must be >= 1");
    if (ffn_expand < 1) throw ConfigError("ffn_expand must be >= 1");
    if (static_cast<int>(block_counts.size()) != levels)
        throw ConfigError("block_counts length " + std::to_string(block_counts.size()) +
                          " != levels " + std::to_string(levels));
    if (static_cast<int>(head_counts.size()) != levels)
        throw ConfigError("head_counts length " + std::to_string(head_counts.size()) +
                          " != levels " + std::to_string(levels));
    for (int l = 0; l < levels; ++l) {
        if (block_counts[static_cast<std::size_t>(l)] < 1) throw ConfigError("block_counts entries must be >= 1");
        const int heads = head_counts[static_cast<std::size_t>(l)];
        if (heads < 1) throw ConfigError("head_counts entries must be >= 1");
        if (channels_at(l) % heads != 0)
            throw ConfigError("channels at level " + std::to_string(l) + " (" + std::to_string(channels_at(l)) +
                              ") not divisible by head count " + std::to_string(heads));
    }
    extractor.validate();
}

json ModelConfig::to_json() const {
    json stages = json::array();
    for (const auto& st : extractor.stages) stages.push_back(json::array({st.out_channels, st.stride}));
    return json{{"base_channels", base_channels},
                {"window_size", window_size},
                {"levels", levels},
                {"block_counts", block_counts},
                {"head_counts", head_counts},
                {"encoder_attention", encoder_attention},
                {"ffn_expand", ffn_expand},
                {"extractor", json{{"stages", stages}}}};
}

ModelConfig ModelConfig::from_json(const json& j, const std::string& path) {
    detail::reject_unknown_keys(j, {"variant", "base_channels", "window_size", "levels", "block_counts",
                                    "head_counts", "encoder_attention", "ffn_expand", "extractor"},
                                path);
    ModelConfig cfg;
    if (j.contains("variant")) cfg = variant(detail::get_field<std::string>(j, "variant", path));
    cfg.base_channels = detail::get_field_or(j, "base_channels", path, cfg.base_channels);
    cfg.window_size = detail::get_field_or(j, "window_size", path, cfg.window_size);
    cfg.levels = detail::get_field_or(j, "levels", path, cfg.levels);
    cfg.block_counts = detail::get_field_or(j, "block_counts", path, cfg.block_counts);
    cfg.head_counts = detail::get_field_or(j, "head_counts", path, cfg.head_counts);
    cfg.encoder_attention = detail::get_field_or(j, "encoder_attention", path, cfg.encoder_attention);
    cfg.ffn_expand = detail::get_field_or(j, "ffn_expand", path, cfg.ffn_expand);
    if (j.contains("extractor")) {
        const json& e = j.at("extractor");
        detail::reject_unknown_keys(e, {"stages"}, path + ".extractor");
        auto stages = detail::get_field<std::vector<std::vector<int>>>(e, "stages", path + ".extractor");
        cfg.extractor.stages.clear();
        for (const auto& st : stages) {
            if (st.size() != 2) throw ConfigError(path + ".extractor.stages: entries are [channels, stride]");
            cfg.extractor.stages.push_back({st[0], st[1]});
        }
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

BlockParams make_block(int channels, int heads, int window, int expand, bool use_attention) {
    BlockParams p;
    p.use_attention = use_attention;
    if (use_attention) {
        p.ln1.gamma = Tensor({channels});
        p.ln1.beta = Tensor({channels});
        p.attn.wq = Tensor({channels, channels});
        p.attn.bq = Tensor({channels});
        p.attn.wk = Tensor({channels, channels});
        p.attn.bk = Tensor({channels});
        p.attn.wv = Tensor({channels, channels});
        p.attn.bv = Tensor({channels});
        p.attn.wo = Tensor({channels, channels});
        p.attn.bo = Tensor({channels});
        p.attn.rel_pos_bias = Tensor({(2 * window - 1) * (2 * window - 1), heads});
        p.attn.heads = heads;
    }
    p.ln2.gamma = Tensor({channels});
    p.ln2.beta = Tensor({channels});
    const int ec = channels * expand;
    p.ffn.w1 = Tensor({channels, ec});
    p.ffn.b1 = Tensor({ec});
    p.ffn.dw = Tensor({3, 3, 1, ec});
    p.ffn.db = Tensor({ec});
    p.ffn.w2 = Tensor({ec, channels});
    p.ffn.b2 = Tensor({channels});
    p.ffn.expand = expand;
    return p;
}

BimParams make_bim(int c) {
    BimParams p;
    const int c2 = 2 * c;
    p.dir_a.wq = Tensor({c2, c2});
    p.dir_a.bq = Tensor({c2});
    p.dir_a.wk = Tensor({c, c});
    p.dir_a.bk = Tensor({c});
    p.dir_a.wv = Tensor({c, c});
    p.dir_a.bv = Tensor({c});
    p.dir_a.alpha_log = Tensor({1});
    p.dir_b.wq = Tensor({c, c});
    p.dir_b.bq = Tensor({c});
    p.dir_b.wk = Tensor({c2, c2});
    p.dir_b.bk = Tensor({c2});
    p.dir_b.wv = Tensor({c2, c2});
    p.dir_b.bv = Tensor({c2});
    p.dir_b.alpha_log = Tensor({1});
    p.seu_w_fine = Tensor({3, 3, 1, c});
    p.seu_b_fine = Tensor({c});
    p.seu_w_coarse = Tensor({3, 3, 1, c2});
    p.seu_b_coarse = Tensor({c2});
    p.fuse_w = Tensor({6 * c, c});
    p.fuse_b = Tensor({c});
    return p;
}

template <typename Fn, typename BlockT>
void visit_block(const std::string& prefix, BlockT& p, Fn&& fn) {
    if (p.use_attention) {
        fn(prefix + ".ln1.gamma", p.ln1.gamma);
        fn(prefix + ".ln1.beta", p.ln1.beta);
        fn(prefix + ".attn.wq", p.attn.wq);
        fn(prefix + ".attn.bq", p.attn.bq);
        fn(prefix + ".attn.wk", p.attn.wk);
        fn(prefix + ".attn.bk", p.attn.bk);
        fn(prefix + ".attn.wv", p.attn.wv);
        fn(prefix + ".attn.bv", p.attn.bv);
        fn(prefix + ".attn.wo", p.attn.wo);
        fn(prefix + ".attn.bo", p.attn.bo);
        fn(prefix + ".attn.rel_pos_bias", p.attn.rel_pos_bias);
    }
    fn(prefix + ".ln2.gamma", p.ln2.gamma);
    fn(prefix + ".ln2.beta", p.ln2.beta);
    fn(prefix + ".ffn.w1", p.ffn.w1);
    fn(prefix + ".ffn.b1", p.ffn.b1);
    fn(prefix + ".ffn.dw", p.ffn.dw);
    fn(prefix + ".ffn.db", p.ffn.db);
    fn(prefix + ".ffn.w2", p.ffn.w2);
    fn(prefix + ".ffn.b2", p.ffn.b2);
}

template <typename Fn, typename BimT>
void visit_bim(const std::string& prefix, BimT& p, Fn&& fn) {
    fn(prefix + ".dir_a.wq", p.dir_a.wq);
    fn(prefix + ".dir_a.bq", p.dir_a.bq);
    fn(prefix + ".dir_a.wk", p.dir_a.wk);
    fn(prefix + ".dir_a.bk", p.dir_a.bk);
    fn(prefix + ".dir_a.wv", p.dir_a.wv);
    fn(prefix + ".dir_a.bv", p.dir_a.bv);
    fn(prefix + ".dir_a.alpha", p.dir_a.alpha_log);
    fn(prefix + ".dir_b.wq", p.dir_b.wq);
    fn(prefix + ".dir_b.bq", p.dir_b.bq);
    fn(prefix + ".dir_b.wk", p.dir_b.wk);
    fn(prefix + ".dir_b.bk", p.dir_b.bk);
    fn(prefix + ".dir_b.wv", p.dir_b.wv);
    fn(prefix + ".dir_b.bv", p.dir_b.bv);
    fn(prefix + ".dir_b.alpha", p.dir_b.alpha_log);
    fn(prefix + ".seu_w_fine", p.seu_w_fine);
    fn(prefix + ".seu_b_fine", p.seu_b_fine);
    fn(prefix + ".seu_w_coarse", p.seu_w_coarse);
    fn(prefix + ".seu_b_coarse", p.seu_b_coarse);
    fn(prefix + ".fuse_w", p.fuse_w);
    fn(prefix + ".fuse_b", p.fuse_b);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    const int L = cfg.levels;
    const int c0 = cfg.base_channels;

    m.in_w_ = Tensor({3, 3, 3, c0});
    m.in_b_ = Tensor({c0});
    int cin = 3;
    for (const auto& st : cfg.extractor.stages) {
        m.extractor_.w.push_back(Tensor({3, 3, cin, st.out_channels}));
        m.extractor_.b.push_back(Tensor({st.out_channels}));
        cin = st.out_channels;
    }
    for (int l = 0; l < L; ++l) {
        std::vector<BlockParams> blocks;
        for (int b = 0; b < cfg.block_counts[static_cast<std::size_t>(l)]; ++b)
            blocks.push_back(make_block(cfg.channels_at(l), cfg.head_counts[static_cast<std::size_t>(l)],
                                        cfg.window_size, cfg.ffn_expand, cfg.encoder_attention));
        m.enc_.push_back(std::move(blocks));
        if (l < L - 1) {
            m.down_w_.push_back(Tensor({4, 4, cfg.channels_at(l), cfg.channels_at(l + 1)}));
            m.down_b_.push_back(Tensor({cfg.channels_at(l + 1)}));
        }
    }
    for (int l = 0; l < L - 1; ++l) {
        m.up_w_.push_back(Tensor({2, 2, cfg.channels_at(l + 1), cfg.channels_at(l)}));
        m.up_b_.push_back(Tensor({cfg.channels_at(l)}));
        m.bims_.push_back(make_bim(cfg.channels_at(l)));
        m.skipfuse_w_.push_back(Tensor({1, 1, 2 * cfg.channels_at(l), cfg.channels_at(l)}));
        m.skipfuse_b_.push_back(Tensor({cfg.channels_at(l)}));
        std::vector<BlockParams> blocks;
        for (int b = 0; b < cfg.block_counts[static_cast<std::size_t>(l)]; ++b)
            blocks.push_back(make_block(cfg.channels_at(l), cfg.head_counts[static_cast<std::size_t>(l)],
                                        cfg.window_size, cfg.ffn_expand, /*use_attention=*/true));
        m.dec_.push_back(std::move(blocks));
    }
    m.out_w_ = Tensor({3, 3, c0, 3});
    m.out_b_ = Tensor({3});

    // Deterministic initialization in registration order from a single stream.
    Rng rng(seed);
    m.for_each_param([&rng](const std::string& name, Tensor& t) {
        real* p = t.mutable_data();
        const std::int64_t n = t.numel();
        if (name == "output_conv.w" || name == "output_conv.b") return;  // zeros: residual starts at identity
        if (ends_with(name, ".gamma")) {
            for (std::int64_t i = 0; i < n; ++i) p[i] = real(1);
            return;
        }
        if (ends_with(name, ".alpha") || ends_with(name, ".beta")) return;  // zeros
        if (t.rank() == 1) return;  // remaining rank-1 params are biases, kept zero
        if (ends_with(name, "rel_pos_bias")) {
            for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<real>(rng.truncated_normal(0.02));
            return;
        }
        if (t.rank() == 4) {  // convolution kernels: fan-in-scaled uniform
            const double fan_in = static_cast<double>(t.dim(0)) * t.dim(1) * t.dim(2);
            const double bound = std::sqrt(1.0 / fan_in);
            for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<real>(rng.uniform(-bound, bound));
            return;
        }
        if (ends_with(name, "fuse_w")) {  // 1x1 fuse conv stored as a matrix
            const double bound = std::sqrt(1.0 / static_cast<double>(t.dim(0)));
            for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<real>(rng.uniform(-bound, bound));
            return;
        }
        // linear / attention weights
        for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<real>(rng.truncated_normal(0.02));
    });
    m.for_each_param([](const std::string&, Tensor& t) { t.set_requires_grad(true); });
    return m;
}

void Model::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("input_conv.w", in_w_);
    fn("input_conv.b", in_b_);
    for (std::size_t i = 0; i < extractor_.w.size(); ++i) {
        fn("extractor." + std::to_string(i) + ".w", extractor_.w[i]);
        fn("extractor." + std::to_string(i) + ".b", extractor_.b[i]);
    }
    for (std::size_t l = 0; l < enc_.size(); ++l) {
        for (std::size_t b = 0; b < enc_[l].size(); ++b)
            visit_block("enc." + std::to_string(l) + ".blk." + std::to_string(b), enc_[l][b], fn);
        if (l + 1 < enc_.size()) {
            fn("down." + std::to_string(l) + ".w", down_w_[l]);
            fn("down." + std::to_string(l) + ".b", down_b_[l]);
        }
    }
    for (std::size_t l = 0; l < dec_.size(); ++l) {
        fn("up." + std::to_string(l) + ".w", up_w_[l]);
        fn("up." + std::to_string(l) + ".b", up_b_[l]);
        visit_bim("bim." + std::to_string(l), bims_[l], fn);
        fn("skip_fuse." + std::to_string(l) + ".w", skipfuse_w_[l]);
        fn("skip_fuse." + std::to_string(l) + ".b", skipfuse_b_[l]);
        for (std::size_t b = 0; b < dec_[l].size(); ++b)
            visit_block("dec." + std::to_string(l) + ".blk." + std::to_string(b), dec_[l][b], fn);
    }
    fn("output_conv.w", out_w_);
    fn("output_conv.b", out_b_);
}

void Model::for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<Model*>(this)->for_each_param(
        [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

long long Model::count_params() const {
    long long total = 0;
    for_each_param([&total](const std::string&, const Tensor& t) { total += t.numel(); });
    return total;
}

Tensor pad_to_multiple(const Tensor& x, int mult) {
    const int th = (x.dim(0) + mult - 1) / mult * mult;
    const int tw = (x.dim(1) + mult - 1) / mult * mult;
    Tensor cur = x;
    while (cur.dim(0) < th || cur.dim(1) < tw) {
        const int pb = std::min(th - cur.dim(0), cur.dim(0) - 1);
        const int pr = std::min(tw - cur.dim(1), cur.dim(1) - 1);
        if (pb == 0 && pr == 0 && (cur.dim(0) < th || cur.dim(1) < tw))
            throw ShapeError("image too small to reflect-pad to a multiple of " + std::to_string(mult));
        cur = reflect_pad2d(cur, 0, pb, 0, pr);
    }
    return cur;
}

std::pair<Tensor, Tensor> Model::forward(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw ShapeError("model expects an (H,W,3) image, got " + image.shape_str());
    const int h = image.dim(0), w = image.dim(1);
    const int L = cfg_.levels;
    const int m = cfg_.window_size;

    Tensor xp = pad_to_multiple(image, cfg_.pad_multiple());

    Tensor f0 = conv2d(xp, in_w_, in_b_, 1, 1, 1);
    Tensor fd = extract_high_freq(xp, cfg_.extractor, extractor_);
    Tensor x = inject(f0, fd, m);

    std::vector<Tensor> skips;  // encoder outputs per level, pre-downsample
    for (int l = 0; l < L; ++l) {
        for (const BlockParams& blk : enc_[static_cast<std::size_t>(l)]) x = transformer_block(x, m, blk);
        if (l < L - 1) {
            skips.push_back(x);
            x = conv2d(x, down_w_[static_cast<std::size_t>(l)], down_b_[static_cast<std::size_t>(l)], 2, 1, 1);
        }
    }
    const Tensor bottleneck = x;

    Tensor dec = bottleneck;
    for (int l = L - 2; l >= 0; --l) {
        const auto lu = static_cast<std::size_t>(l);
        Tensor up = conv_transpose2x2(dec, up_w_[lu], up_b_[lu]);
        const Tensor& coarse = (l + 1 == L - 1) ? bottleneck : skips[lu + 1];
        Tensor fsl = bim_forward(CrossScalePair::make(skips[lu], coarse), bims_[lu]);
        Tensor cat = concat({up, fsl}, 2);
        dec = conv2d(cat, skipfuse_w_[lu], skipfuse_b_[lu], 1, 0, 1);
        for (const BlockParams& blk : dec_[lu]) dec = transformer_block(dec, m, blk);
    }

    Tensor r_pad = conv2d(dec, out_w_, out_b_, 1, 1, 1);
    Tensor restored_pad = add(xp, r_pad);
    Tensor restored = crop2d(restored_pad, 0, 0, h, w);
    Tensor residual = crop2d(r_pad, 0, 0, h, w);
    return {restored, residual};
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: "HITC" | u32 version | u32 json_len | config json |
// u32 n_params | { u32 name_len | name | u64 count | f64-le values }*

namespace {
constexpr char kCheckpointMagic[4] = {'H', 'I', 'T', 'C'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t take_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw CheckpointError("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t take_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw CheckpointError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace

void Model::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);
    os.write(kCheckpointMagic, 4);
    put_u32(os, kCheckpointVersion);
    const std::string cfg_json = cfg_.to_json().dump();
    put_u32(os, static_cast<std::uint32_t>(cfg_json.size()));
    os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

    std::uint32_t n_params = 0;
    for_each_param([&n_params](const std::string&, const Tensor&) { ++n_params; });
    put_u32(os, n_params);
    for_each_param([&os](const std::string& name, const Tensor& t) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(os, static_cast<std::uint64_t>(t.numel()));
        const real* p = t.data();
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            const double v = static_cast<double>(p[i]);
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(os, bits);
        }
    });
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw CheckpointError("not a HITC checkpoint: " + path);
    const std::uint32_t version = take_u32(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t json_len = take_u32(is);
    std::string cfg_json(json_len, '\0');
    is.read(cfg_json.data(), json_len);
    if (!is) throw CheckpointError("checkpoint truncated");
    json j;
    try {
        j = json::parse(cfg_json);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(j, "config");
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
    }

    Model m = build(cfg, 0);
    const std::uint32_t n_params = take_u32(is);
    std::uint32_t expected = 0;
    m.for_each_param([&expected](const std::string&, const Tensor&) { ++expected; });
    if (n_params != expected)
        throw CheckpointError("checkpoint parameter count " + std::to_string(n_params) + " != model's " +
                              std::to_string(expected));
    m.for_each_param([&is, &path](const std::string& name, Tensor& t) {
        const std::uint32_t name_len = take_u32(is);
        std::string stored(name_len, '\0');
        is.read(stored.data(), name_len);
        if (!is) throw CheckpointError("checkpoint truncated: " + path);
        if (stored != name)
            throw CheckpointError("checkpoint parameter '" + stored + "' does not match model parameter '" +
                                  name + "'");
        const std::uint64_t count = take_u64(is);
        if (count != static_cast<std::uint64_t>(t.numel()))
            throw CheckpointError("checkpoint parameter '" + name + "' has " + std::to_string(count) +
                                  " values, expected " + std::to_string(t.numel()));
        Tensor fresh(t.shape());
        real* p = fresh.mutable_data();
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::uint64_t bits = take_u64(is);
            double v;
            std::memcpy(&v, &bits, 8);
            p[i] = static_cast<real>(v);
        }
        fresh.set_requires_grad(true);
        t = fresh;
    });
    return m;
}

}  // namespace hit
