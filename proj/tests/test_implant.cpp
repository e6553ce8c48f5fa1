#include <doctest.h>

#include <cmath>

#include "lesyn/digest.hpp"
#include "lesyn/implant.hpp"
#include "lesyn/phantom.hpp"
#include "lesyn/rng.hpp"
#include "support/fixtures.hpp"

using namespace lesyn;
namespace fx = lesyn::testing;

namespace {

Mask disk(int size, double cr, double cc, double radius) {
    Mask m(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) m(r, c) = (r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius;
    return m;
}

FloatGrid ramp(int size) {
    FloatGrid g(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) g(r, c) = 0.2f + 0.01f * static_cast<float>(r) + 0.003f * static_cast<float>(c);
    return g;
}

// Brute-force Euclidean distance from (r, c) to the nearest foreground pixel.
double distance_to_mask(const Mask& m, int r, int c) {
    double best = 1e9;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            if (m(i, j)) best = std::min(best, std::hypot(i - r, j - c));
    return best;
}

Slice healthy_slice(int size = 96) {
    Slice s{FloatGrid(size, size, 0.05f)};
    s.provenance = Provenance::phantom;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            if (std::hypot(r - size / 2.0, c - size / 2.0) < size * 0.4) s.pixels(r, c) = 0.5f + 0.001f * (r % 7);
    return s;
}

}  // namespace

TEST_CASE("identity transform") {
    const auto m = disk(32, 15, 16, 6);
    const auto p = ramp(32);
    const auto t = transform_lesion(p, m, 0.0, 1.0);
    CHECK(t.mask == m);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(t.patch.values()[i] - p.values()[i]) <= 1e-6f);
}

TEST_CASE("a full turn equals no rotation") {
    const auto m = disk(32, 14, 17, 7);
    const auto p = ramp(32);
    const auto a = transform_lesion(p, m, 0.0, 1.1);
    const auto b = transform_lesion(p, m, 360.0, 1.1);
    CHECK(a.mask == b.mask);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(a.patch.values()[i] - b.patch.values()[i]) <= 1e-6f);
}

TEST_CASE("scaling a 10 pixel disk by 2 doubles its width") {
    const auto m = disk(64, 31.5, 31.5, 5.0);
    REQUIRE(bounding_box(m).width() == 10);
    const auto t = transform_lesion(ramp(64), m, 0.0, 2.0);
    CHECK(std::abs(bounding_box(t.mask).width() - 20) <= 1);
    for (auto v : t.mask.values()) CHECK((v == 0 || v == 1));
}

TEST_CASE("rotation keeps area and a quarter turn swaps extents") {
    Mask m(40, 40);
    for (int r = 16; r < 24; ++r)
        for (int c = 10; c < 30; ++c) m(r, c) = 1;
    const auto t = transform_lesion(ramp(40), m, 90.0, 1.0);
    CHECK(bounding_box(t.mask).height() == 20);
    CHECK(bounding_box(t.mask).width() == 8);
    CHECK(t.mask.foreground_count() == m.foreground_count());
}

TEST_CASE("transform errors") {
    CHECK_THROWS_AS(transform_lesion(ramp(16), Mask(16, 16), 0, 1), EmptyMaskError);
    CHECK_THROWS_AS(transform_lesion(ramp(16), disk(16, 7.5, 7.5, 6), 0, 1.8), TransformError);
    CHECK_THROWS_AS(transform_lesion(ramp(16), disk(16, 7.5, 7.5, 3), 0, 0.0), InvalidArgument);
}

TEST_CASE("hard paste with sigma 0") {
    const auto s = healthy_slice(32);
    const auto m = disk(32, 16, 16, 4);
    const FloatGrid lesion(32, 32, 0.9f);
    const auto out = blend(s, lesion, m, 0.0);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) CHECK(out.pixels(r, c) == (m(r, c) ? 0.9f : s.pixels(r, c)));
}

TEST_CASE("feathering is local and saturates inside large lesions") {
    const auto s = healthy_slice(64);
    const auto m = disk(64, 32, 32, 14);
    const FloatGrid lesion(64, 64, 0.9f);
    const double sigma = 2.0;
    const auto out = blend(s, lesion, m, sigma);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
            if (distance_to_mask(m, r, c) > 4 * sigma) CHECK(std::abs(out.pixels(r, c) - s.pixels(r, c)) <= 1e-6f);
    CHECK(std::abs(out.pixels(32, 32) - 0.9f) <= 1e-6f);
    const auto alpha = feather_alpha(m, sigma);
    CHECK(alpha(32, 32) == doctest::Approx(1.0));
    CHECK(alpha(32, 32 + 14) < 1.0f);
    CHECK(alpha(32, 32 + 14) > 0.3f);
    for (float a : alpha.values()) {
        CHECK(a >= 0.0f);
        CHECK(a <= 1.0f);
    }
    CHECK(feather_alpha(m, 0.0) == m.to_float());
}

TEST_CASE("placement is contained and deterministic") {
    const auto ph = generate_phantom(3, PhantomConfig{});
    const auto lesion = disk(24, 11.5, 11.5, 5);
    const FloatGrid patch(24, 24, 0.8f);
    ImplantSpec spec;
    spec.seed = 17;
    spec.rotation_deg = 30;
    spec.scale = 1.2;
    const auto a = place_lesion(ph.slice, ph.liver, patch, lesion, spec);
    const auto b = place_lesion(ph.slice, ph.liver, patch, lesion, spec);
    CHECK(a.applied.row_offset == b.applied.row_offset);
    CHECK(a.applied.col_offset == b.applied.col_offset);
    CHECK(a.slice.pixels == b.slice.pixels);
    CHECK(a.lesion_mask == b.lesion_mask);
    CHECK(a.lesion_mask.any());
    CHECK(contained_in(a.lesion_mask, ph.liver));
    CHECK(a.slice.provenance == Provenance::synthetic);
    CHECK(a.applied.attempts >= 1);
    CHECK(a.applied.rotation_deg == 30);

    // the label is exactly the transformed mask shifted to the resolved offset
    const auto t = transform_lesion(patch, lesion, 30, 1.2);
    std::size_t moved = 0;
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 24; ++c)
            if (t.mask(r, c)) {
                CHECK(a.lesion_mask(a.applied.row_offset + r, a.applied.col_offset + c) == 1);
                ++moved;
            }
    CHECK(moved == a.lesion_mask.foreground_count());

    // outside the feather reach nothing changes
    const double reach = 4 * spec.feather_sigma;
    for (int r = 0; r < ph.slice.pixels.rows(); r += 3)
        for (int c = 0; c < ph.slice.pixels.cols(); c += 3)
            if (distance_to_mask(a.lesion_mask, r, c) > reach)
                CHECK(std::abs(a.slice.pixels(r, c) - ph.slice.pixels(r, c)) <= 1e-6f);
}

TEST_CASE("a one pixel lesion always fits") {
    Mask one(8, 8);
    one(4, 4) = 1;
    const FloatGrid patch(8, 8, 0.7f);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto ph = generate_phantom(seed, PhantomConfig{});
        ImplantSpec spec;
        spec.seed = seed;
        spec.feather_sigma = 0;
        const auto res = place_lesion(ph.slice, ph.liver, patch, one, spec);
        CHECK(res.lesion_mask.foreground_count() == 1);
        for (int r = 0; r < ph.liver.rows(); ++r)
            for (int c = 0; c < ph.liver.cols(); ++c)
                if (res.lesion_mask(r, c)) CHECK(ph.liver(r, c) == 1);
    }
}

TEST_CASE("a lesion larger than the liver cannot be placed") {
    Slice s{FloatGrid(40, 40, 0.5f)};
    const auto liver = disk(40, 20, 20, 4);
    const auto lesion = disk(30, 15, 15, 10);
    ImplantSpec spec;
    spec.max_retries = 7;
    try {
        place_lesion(s, liver, FloatGrid(30, 30, 0.9f), lesion, spec);
        FAIL("expected placement failure");
    } catch (const PlacementError& e) {
        CHECK(e.attempts() == 7);
    }
    CHECK_THROWS_AS(place_lesion(s, Mask(40, 40), FloatGrid(30, 30, 0.9f), lesion, spec), InvalidArgument);
}

TEST_CASE("spec validation and drawing") {
    ImplantSpec s;
    s.scale = 0;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    s = ImplantSpec{};
    s.feather_sigma = -1;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    std::mt19937_64 a(5), b(5);
    ImplantRanges ranges;
    for (int i = 0; i < 50; ++i) {
        const auto x = draw_implant_spec(a, ranges);
        const auto y = draw_implant_spec(b, ranges);
        CHECK(x.rotation_deg == y.rotation_deg);
        CHECK(x.seed == y.seed);
        CHECK(x.rotation_deg >= 0.0);
        CHECK(x.rotation_deg < 360.0);
        CHECK(x.scale >= 0.7);
        CHECK(x.scale <= 1.3);
    }
}

TEST_CASE("synthetic dataset building") {
    GeneratorSnapshot model;
    model.params = generator_init(fx::small_generator(), 4);
    model.mode = SynthesisMode::mask_plus_density;
    const auto lesions = fx::phantom_lesions(16, 3, 9, 64);
    std::vector<Mask> shapes;
    std::vector<DensityHistogram> hists;
    for (const auto& r : lesions) {
        shapes.push_back(r.sample.mask);
        hists.push_back(r.histogram);
    }
    PhantomConfig healthy_cfg;
    healthy_cfg.rows = healthy_cfg.cols = 64;
    std::vector<SliceSample> healthy;
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto ph = generate_phantom(100 + s, healthy_cfg);
        healthy.push_back({ph.slice, ph.liver, {}, HuWindow{0, 1}});
    }
    const auto report = build_synthetic_dataset(healthy, shapes, hists, model, 12, SynthesisMode::mask_plus_density, 3);
    REQUIRE(report.samples.size() == 12);
    CHECK(report.sample_seeds.size() == 12);
    CHECK(report.placement_failures.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        const auto& s = report.samples[i];
        REQUIRE(s.lesions.size() == 1);
        CHECK(s.lesions[0].any());
        CHECK(contained_in(s.lesions[0], s.liver));
        CHECK(report.sample_seeds[i] == mix_seed(3, i));
        CHECK(s.slice.provenance == Provenance::synthetic);
    }

    fx::TempDir a("bda"), b("bdb");
    write_synthetic_dataset(a.path, report, SynthesisMode::mask_plus_density, 3, "abc");
    const auto again = build_synthetic_dataset(healthy, shapes, hists, model, 12, SynthesisMode::mask_plus_density, 3);
    write_synthetic_dataset(b.path, again, SynthesisMode::mask_plus_density, 3, "abc");
    CHECK(directory_digest(a.path) == directory_digest(b.path));
    CHECK(read_slice_dataset(a.path).size() == 12);
    const auto manifest = MetaRecord::load(a.path / "manifest");
    CHECK(manifest.get("mode") == "mask+density");
    CHECK(manifest.get("checkpoint_digest") == "abc");

    CHECK_THROWS_AS(build_synthetic_dataset(healthy, shapes, hists, model, 2, SynthesisMode::mask_only, 3), InvalidArgument);
    CHECK_THROWS_AS(build_synthetic_dataset(healthy, {}, hists, model, 2, SynthesisMode::mask_plus_density, 3),
                    InvalidArgument);
    CHECK_THROWS_AS(build_synthetic_dataset(healthy, shapes, hists, model, 0, SynthesisMode::mask_plus_density, 3),
                    InvalidArgument);

    // a liver too small for any shape exhausts the redraw budget
    std::vector<SliceSample> tiny{{Slice{FloatGrid(64, 64, 0.5f)}, disk(64, 32, 32, 1), {}, HuWindow{0, 1}}};
    BuildOptions opts;
    opts.max_redraws = 2;
    opts.ranges.max_retries = 3;
    CHECK_THROWS_AS(build_synthetic_dataset(tiny, shapes, hists, model, 2, SynthesisMode::mask_plus_density, 3, opts),
                    DatasetBuildError);
}
