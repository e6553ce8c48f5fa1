#include <doctest.h>

#include <random>

#include "lesyn/imaging.hpp"
#include "lesyn/phantom.hpp"

using namespace lesyn;

namespace {

FloatGrid single(float v) { return FloatGrid(1, 1, v); }

Mask full_mask(int rows, int cols) {
    Mask m(rows, cols);
    for (auto& v : m.values()) v = 1;
    return m;
}

}  // namespace

TEST_CASE("normalize_hu examples") {
    const HuWindow w{-100, 400};
    CHECK(normalize_hu(single(-100), w)(0, 0) == 0.0f);
    CHECK(normalize_hu(single(400), w)(0, 0) == 1.0f);
    CHECK(normalize_hu(single(150), w)(0, 0) == 0.5f);
    CHECK(normalize_hu(single(-500), w)(0, 0) == 0.0f);
    CHECK(normalize_hu(single(9000), w)(0, 0) == 1.0f);
    CHECK_THROWS_AS(normalize_hu(single(0), HuWindow{5, 5}), InvalidArgument);
    CHECK_THROWS_AS(normalize_hu(single(0), HuWindow{6, 5}), InvalidArgument);
}

TEST_CASE("normalize_hu is monotone and idempotent on clipped input") {
    const HuWindow unit{0, 1};
    FloatGrid ramp(1, 200);
    for (int c = 0; c < 200; ++c) ramp(0, c) = -300.0f + 4.0f * c;
    auto n = normalize_hu(ramp, HuWindow{-100, 400});
    for (int c = 1; c < 200; ++c) CHECK(n(0, c) >= n(0, c - 1));
    CHECK(normalize_hu(n, unit) == n);
}

TEST_CASE("mask rejects non-binary values") {
    Grid<std::uint8_t> g(2, 2, 0);
    g(1, 1) = 2;
    CHECK_THROWS_AS(Mask{g}, InvalidArgument);
    FloatGrid f(2, 2, 0.0f);
    f(0, 1) = 0.7f;
    const auto m = Mask::from_values(f);
    CHECK(m.foreground_count() == 1);
    CHECK(m(0, 1) == 1);
}

TEST_CASE("connected components are 4-connected") {
    Mask m(4, 4);
    m(0, 0) = m(1, 1) = m(2, 1) = m(3, 3) = 1;
    const auto comps = connected_components(m);
    REQUIRE(comps.size() == 3);
    CHECK(comps[0](0, 0) == 1);
    CHECK(comps[1].foreground_count() == 2);
    CHECK(comps[2](3, 3) == 1);
}

TEST_CASE("extract_lesion_sample centers a single pixel") {
    Slice s{FloatGrid(100, 100, 0.0f)};
    s.pixels(30, 70) = 1.0f;
    Mask m(100, 100);
    m(30, 70) = 1;
    const auto sample = extract_lesion_sample(s, m, 32, HuWindow{0, 1});
    CHECK(sample.mask(16, 16) == 1);
    CHECK(sample.patch(16, 16) == 1.0f);
    CHECK(sample.mask.foreground_count() == 1);
    CHECK_FALSE(sample.rescaled);
}

TEST_CASE("extract_lesion_sample keeps a 5x5 lesion intact") {
    Slice s{FloatGrid(512, 512, 0.0f)};
    Mask m(512, 512);
    for (int r = 200; r < 205; ++r)
        for (int c = 300; c < 305; ++c) m(r, c) = 1;
    std::size_t before = 0;
    for (auto v : m.values()) before += v;
    const auto sample = extract_lesion_sample(s, m, 128, HuWindow{-100, 400});
    std::size_t after = 0;
    for (auto v : sample.mask.values()) after += v;
    CHECK(after == before);
    CHECK(after == 25);
}

TEST_CASE("oversized lesions are downscaled to fit") {
    Slice s{FloatGrid(80, 80, 0.5f)};
    const auto m = full_mask(80, 80);
    const auto sample = extract_lesion_sample(s, m, 32, HuWindow{0, 1});
    CHECK(sample.rescaled);
    const auto bb = bounding_box(sample.mask);
    CHECK(bb.height() <= 32);
    CHECK(bb.width() <= 32);
    CHECK(sample.mask.any());
}

TEST_CASE("extract_lesion_sample rejects an empty mask") {
    Slice s{FloatGrid(20, 20, 0.0f)};
    CHECK_THROWS_AS(extract_lesion_sample(s, Mask(20, 20), 8, HuWindow{0, 1}), EmptyMaskError);
}

TEST_CASE("compute_histogram examples") {
    SUBCASE("uniform 0.505 is a delta at bin 50") {
        const auto h = compute_histogram(FloatGrid(4, 4, 0.505f), full_mask(4, 4));
        CHECK(h.size() == 100);
        for (int i = 0; i < 100; ++i) CHECK(h[i] == (i == 50 ? 1.0 : 0.0));
    }
    SUBCASE("two extreme pairs split 50/50") {
        FloatGrid p(2, 2);
        p.storage() = {0.005f, 0.005f, 0.995f, 0.995f};
        const auto h = compute_histogram(p, full_mask(2, 2));
        CHECK(h[0] == 0.5);
        CHECK(h[99] == 0.5);
    }
    SUBCASE("1.0 falls in the last bin") {
        const auto h = compute_histogram(FloatGrid(1, 1, 1.0f), full_mask(1, 1));
        CHECK(h[99] == 1.0);
    }
    SUBCASE("unmasked pixels are ignored") {
        FloatGrid p(1, 2);
        p.storage() = {0.105f, 0.905f};
        Mask m(1, 2);
        m(0, 1) = 1;
        CHECK(compute_histogram(p, m)[90] == 1.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_histogram(FloatGrid(2, 2, 0.1f), Mask(2, 2)), EmptyMaskError);
        CHECK_THROWS_AS(compute_histogram(FloatGrid(2, 3, 0.1f), full_mask(2, 2)), InvalidArgument);
    }
}

TEST_CASE("compute_histogram output is a distribution") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        FloatGrid p(16, 16);
        Mask m(16, 16);
        for (auto& v : p.values()) v = u(rng);
        for (auto& v : m.values()) v = u(rng) < 0.3f;
        m(0, 0) = 1;
        const auto h = compute_histogram(p, m);
        double sum = 0;
        for (double b : h.bins()) {
            CHECK(b >= 0.0);
            sum += b;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("extract then histogram equals the histogram over the slice") {
    PhantomConfig cfg;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto ph = generate_phantom(seed, cfg);
        for (const auto& lesion : ph.lesions) {
            const HuWindow w{0, 1};
            const auto sample = extract_lesion_sample(ph.slice, lesion, 64, w);
            if (sample.rescaled) continue;
            const auto direct = compute_histogram(normalize_hu(ph.slice, w), lesion);
            CHECK(compute_histogram(sample.patch, sample.mask) == direct);
        }
    }
}

TEST_CASE("histogram_l1 examples") {
    const auto d10 = DensityHistogram::delta(10);
    CHECK(histogram_l1(d10, d10) == 0.0);
    CHECK(histogram_l1(DensityHistogram::delta(0), DensityHistogram::delta(99)) == 2.0);
    std::vector<double> split(100, 0.0);
    split[10] = split[11] = 0.5;
    // |1 - 0.5| + |0 - 0.5|
    CHECK(histogram_l1(d10, DensityHistogram(split)) == doctest::Approx(0.5 + 0.5));
    CHECK_THROWS_AS(histogram_l1(d10, DensityHistogram::delta(1, 10)), InvalidArgument);
}

TEST_CASE("DensityHistogram validation") {
    CHECK_THROWS_AS(DensityHistogram(std::vector<double>{0.5, 0.6}), InvalidArgument);
    CHECK_THROWS_AS(DensityHistogram(std::vector<double>{1.5, -0.5}), InvalidArgument);
    CHECK_THROWS_AS(DensityHistogram(std::vector<double>{}), InvalidArgument);
    CHECK_THROWS_AS(DensityHistogram::from_weights(std::vector<double>(100, 0.0)), InvalidArgument);
    const auto h = DensityHistogram::from_weights({1, 3});
    CHECK(h[1] == 0.75);
    CHECK(DensityHistogram::uniform().mean() == doctest::Approx(0.5));
}

TEST_CASE("gaussian mixture histogram with zero width is a delta") {
    const double mean = 37.2, width = 0.0, weight = 1.0;
    const auto h = gaussian_mixture_histogram({&mean, 1}, {&width, 1}, {&weight, 1});
    CHECK(h == DensityHistogram::delta(37));
}

TEST_CASE("histogram quantile inverts the cdf") {
    CHECK(histogram_quantile(DensityHistogram::uniform(), 0.25) == doctest::Approx(0.25));
    CHECK(histogram_quantile(DensityHistogram::delta(50), 0.5) == doctest::Approx(0.505));
}

TEST_CASE("phantoms are deterministic per seed") {
    PhantomConfig cfg;
    const auto a = generate_phantom(42, cfg);
    const auto b = generate_phantom(42, cfg);
    const auto c = generate_phantom(43, cfg);
    CHECK(a.slice.pixels == b.slice.pixels);
    CHECK(a.liver == b.liver);
    CHECK(a.lesions.size() == b.lesions.size());
    for (std::size_t k = 0; k < a.lesions.size(); ++k) CHECK(a.lesions[k] == b.lesions[k]);
    CHECK(a.target_histograms == b.target_histograms);
    CHECK_FALSE(a.slice.pixels == c.slice.pixels);
    CHECK(a.slice.provenance == Provenance::phantom);
}

TEST_CASE("phantom lesions lie inside the liver") {
    PhantomConfig cfg;
    cfg.min_lesions = 1;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto ph = generate_phantom(seed, cfg);
        CHECK(ph.lesions.size() >= 1);
        for (const auto& l : ph.lesions) {
            CHECK(l.any());
            CHECK(contained_in(l, ph.liver));
        }
    }
}

TEST_CASE("large phantom lesions match their target histogram") {
    PhantomConfig cfg;
    cfg.rows = cfg.cols = 192;
    cfg.min_lesions = 1;
    cfg.max_lesions = 2;
    cfg.lesion_radius_min = 13;
    cfg.lesion_radius_max = 22;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto ph = generate_phantom(seed, cfg);
        const auto unit = normalize_hu(ph.slice, HuWindow{0, 1});
        for (std::size_t k = 0; k < ph.lesions.size(); ++k) {
            if (ph.lesions[k].foreground_count() < 500) continue;
            ++checked;
            CHECK(histogram_l1(compute_histogram(unit, ph.lesions[k]), ph.target_histograms[k]) <= 0.2);
        }
    }
    CHECK(checked >= 50);
}

TEST_CASE("infeasible phantom configs are rejected") {
    PhantomConfig cfg;
    cfg.rows = cfg.cols = 32;
    cfg.min_lesions = cfg.max_lesions = 1;
    cfg.lesion_radius_min = cfg.lesion_radius_max = 30;
    CHECK_THROWS_AS(generate_phantom(1, cfg), GenerationError);
    PhantomConfig bad;
    bad.min_lesions = 3;
    bad.max_lesions = 1;
    CHECK_THROWS_AS(generate_phantom(1, bad), InvalidArgument);
}
