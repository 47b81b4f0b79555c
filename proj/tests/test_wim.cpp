#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "hit/ops.hpp"
#include "hit/rng.hpp"
#include "hit/wim.hpp"
#include "oracles.hpp"

using namespace hit;

namespace {

ExtractorParams random_extractor(Rng& rng, const ExtractorConfig& cfg, double wstd = 0.3) {
    ExtractorParams p;
    int cin = 3;
    for (const auto& st : cfg.stages) {
        p.w.push_back(oracle::random_tensor(rng, {3, 3, cin, st.out_channels}, wstd));
        p.b.push_back(oracle::random_tensor(rng, {st.out_channels}, 0.1));
        cin = st.out_channels;
    }
    return p;
}

}  // namespace

TEST_CASE("zero image with zero biases maps to a zero feature map") {
    Rng rng(1);
    ExtractorConfig cfg = ExtractorConfig::preset();
    ExtractorParams p = random_extractor(rng, cfg);
    for (Tensor& b : p.b) b = Tensor(b.shape());
    Tensor zero({16, 16, 3});
    Tensor out = extract_high_freq(zero, cfg, p);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == real(0));
}

TEST_CASE("extractor output shape is (H, W, C_d)") {
    Rng rng(2);
    ExtractorConfig cfg = ExtractorConfig::preset();
    ExtractorParams p = random_extractor(rng, cfg);
    for (int hw : {8, 16, 24}) {
        Tensor img = oracle::random_image(rng, hw, hw + 8);
        Tensor out = extract_high_freq(img, cfg, p);
        CHECK(out.shape() == std::vector<int>{hw, hw + 8, cfg.out_channels()});
    }
}

TEST_CASE("extractor equals the staged composition oracle") {
    Rng rng(3);
    ExtractorConfig cfg;
    cfg.stages = {{4, 1}, {6, 2}, {6, 1}, {5, 1}};
    ExtractorParams p = random_extractor(rng, cfg);
    Tensor img = oracle::random_image(rng, 8, 8);

    Tensor out = extract_high_freq(img, cfg, p);

    Tensor x = img;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const int cin = x.dim(2);
        Tensor y = gelu(oracle::conv2d(x, p.w[i], p.b[i], cfg.stages[i].stride, 1, 1));
        if (cfg.stages[i].stride == 1 && cfg.stages[i].out_channels == cin) y = add(y, x);
        x = y;
    }
    Tensor expect = bilinear_resize(x, 8, 8);
    CHECK(oracle::max_abs_diff(out, expect) < 1e-13);
}

TEST_CASE("inject symmetry: fd == f0 reproduces f0 where the binning rule allows") {
    Rng rng(4);
    // C == 1: the single output bin averages the two equal channels
    {
        Tensor f0 = oracle::random_tensor(rng, {4, 4, 1});
        Tensor out = inject(f0, f0, 2);
        CHECK(oracle::max_abs_diff(out, f0) < 1e-15);
    }
    // channel-constant tokens: every bin averages equal values
    {
        const int c = 4;
        Tensor base = oracle::random_tensor(rng, {4, 4, 1});
        Tensor f0({4, 4, c});
        for (int i = 0; i < 16; ++i)
            for (int ch = 0; ch < c; ++ch) f0.mutable_data()[static_cast<std::int64_t>(i) * c + ch] = base.data()[i];
        Tensor out = inject(f0, f0, 2);
        CHECK(oracle::max_abs_diff(out, f0) < 1e-15);
    }
}

TEST_CASE("inject follows the channel binning rule: [1,2,3,4] with C=2 pools to [1.5, 3.5]") {
    // one pixel, f0 channels [1,2], fd channels [3,4]
    Tensor f0({1, 1, 2}, {real(1), real(2)});
    Tensor fd({1, 1, 2}, {real(3), real(4)});
    Tensor out = inject(f0, fd, 1);
    CHECK(out.at({0, 0, 0}) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(out.at({0, 0, 1}) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("inject output shape is (H, W, C) for valid inputs") {
    Rng rng(5);
    Tensor f0 = oracle::random_tensor(rng, {8, 12, 5});
    Tensor fd = oracle::random_tensor(rng, {8, 12, 7});
    CHECK(inject(f0, fd, 4).shape() == std::vector<int>{8, 12, 5});
}

TEST_CASE("inject rejects mismatched spatial extents") {
    Tensor f0({4, 4, 2}), fd({4, 6, 2});
    CHECK_THROWS_AS(inject(f0, fd, 2), ShapeError);
}

TEST_CASE("inject is window-local in fd") {
    Rng rng(6);
    const int m = 2;
    Tensor f0 = oracle::random_tensor(rng, {4, 4, 3});
    Tensor fd = oracle::random_tensor(rng, {4, 4, 3});
    Tensor base = inject(f0, fd, m);

    Tensor fd2(fd.shape());
    std::memcpy(fd2.mutable_data(), fd.data(), sizeof(real) * static_cast<std::size_t>(fd.numel()));
    for (int y = 0; y < m; ++y)  // perturb window (0,0) only
        for (int x = 0; x < m; ++x)
            for (int ch = 0; ch < 3; ++ch)
                fd2.mutable_data()[(static_cast<std::int64_t>(y) * 4 + x) * 3 + ch] += real(5);
    Tensor changed = inject(f0, fd2, m);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            if (y < m && x < m) continue;
            for (int ch = 0; ch < 3; ++ch) CHECK(base.at({y, x, ch}) == changed.at({y, x, ch}));
        }
}

TEST_CASE("inject is linear in (f0, fd)") {
    Rng rng(7);
    const real a = real(2.5);
    Tensor f0 = oracle::random_tensor(rng, {4, 4, 3});
    Tensor fd = oracle::random_tensor(rng, {4, 4, 5});
    Tensor scaled = inject(mul_scalar(f0, a), mul_scalar(fd, a), 2);
    Tensor expect = mul_scalar(inject(f0, fd, 2), a);
    CHECK(oracle::max_abs_diff(scaled, expect) < 1e-13);
}

TEST_CASE("HITF feature files round-trip") {
    Rng rng(8);
    Tensor f = oracle::random_tensor(rng, {5, 7, 3});
    const std::string path = "wim_features_test.hitf";
    save_feature_file(path, f);
    Tensor g = load_feature_file(path);
    REQUIRE(g.shape() == f.shape());
    // stored as 32-bit reals
    for (std::int64_t i = 0; i < f.numel(); ++i)
        CHECK(static_cast<float>(f.data()[i]) == static_cast<float>(g.data()[i]));
    std::remove(path.c_str());
}

TEST_CASE("HITF loader validates the header") {
    const std::string path = "wim_bad_test.hitf";
    {
        std::FILE* fp = std::fopen(path.c_str(), "wb");
        std::fputs("NOPE", fp);
        std::fclose(fp);
    }
    CHECK_THROWS_AS(load_feature_file(path), IoError);
    CHECK_THROWS_AS(load_feature_file("does_not_exist.hitf"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("loaded features can be injected directly") {
    Rng rng(9);
    Tensor f0 = oracle::random_tensor(rng, {4, 4, 2});
    Tensor fd = oracle::random_tensor(rng, {4, 4, 4});
    const std::string path = "wim_inject_test.hitf";
    save_feature_file(path, fd);
    Tensor loaded = load_feature_file(path);
    Tensor out = inject(f0, loaded, 2);
    CHECK(out.shape() == std::vector<int>{4, 4, 2});
    std::remove(path.c_str());
}
