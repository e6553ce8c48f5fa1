#pragma once

// Shared datasets and configs for the unit and acceptance tests.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lesyn/dataset.hpp"
#include "lesyn/discriminator.hpp"
#include "lesyn/generator.hpp"
#include "lesyn/phantom.hpp"
#include "lesyn/training.hpp"

namespace lesyn::testing {

inline const HuWindow kUnitWindow{0.0, 1.0};

/// True when the patch_size square centered like extract_lesion_sample lies inside the liver.
inline bool patch_inside_liver(const PhantomCase& ph, const Mask& lesion, int patch_size) {
    const auto bb = bounding_box(lesion);
    const int top = (bb.row_min + bb.row_max) / 2 - patch_size / 2;
    const int left = (bb.col_min + bb.col_max) / 2 - patch_size / 2;
    for (int r = 0; r < patch_size; ++r)
        for (int c = 0; c < patch_size; ++c)
            if (!ph.liver.contains(top + r, left + c) || !ph.liver(top + r, left + c)) return false;
    return true;
}

/// Phantom lesions regenerated from one seed at several target means: identical shape and
/// texture, different density. Each group of means shares a shape; every patch lies wholly
/// in parenchyma.
inline std::vector<LesionRecord> density_sweep_set(int patch_size, const std::vector<std::vector<double>>& groups,
                                                   std::uint64_t first_seed = 0) {
    PhantomConfig cfg;
    cfg.rows = cfg.cols = 3 * patch_size;
    cfg.min_lesions = cfg.max_lesions = 1;
    cfg.lesion_radius_min = patch_size * 0.11;
    cfg.lesion_radius_max = patch_size * 0.19;
    cfg.liver_semi_axis_rows = 0.42;
    cfg.liver_semi_axis_cols = 0.45;
    std::vector<LesionRecord> out;
    std::uint64_t seed = first_seed;
    for (const auto& group : groups) {
        for (;; ++seed) {
            cfg.lesion_means = {group.front()};
            const auto probe = generate_phantom(seed, cfg);
            if (patch_inside_liver(probe, probe.lesions[0], patch_size)) break;
        }
        for (double mean : group) {
            cfg.lesion_means = {mean};
            const auto ph = generate_phantom(seed, cfg);
            auto sample = extract_lesion_sample(ph.slice, ph.lesions[0], patch_size, kUnitWindow);
            auto hist = compute_histogram(sample.patch, sample.mask);
            out.push_back({"seed" + std::to_string(seed) + "_m" + std::to_string(mean), std::move(sample), std::move(hist)});
        }
        ++seed;
    }
    return out;
}

/// The 8-sample overfit set: two shapes, four densities each.
inline std::vector<LesionRecord> overfit_set(int patch_size = 64) {
    return density_sweep_set(patch_size, {{0.1, 0.3, 0.7, 0.9}, {0.2, 0.35, 0.65, 0.8}});
}

inline GeneratorConfig desk_generator(int patch_size = 64) {
    GeneratorConfig g;
    g.patch_size = patch_size;
    g.base_channels = 16;
    g.max_channels = 128;
    return g;
}

/// Tiny trainable pair for fast unit tests (patch 16).
inline GeneratorConfig small_generator(int patch_size = 16) {
    GeneratorConfig g;
    g.patch_size = patch_size;
    g.base_channels = 4;
    g.max_channels = 16;
    g.bridge_units = 16;
    g.hist_dense_units = 16;
    return g;
}

inline DiscriminatorConfig small_discriminator(int patch_size = 16) {
    DiscriminatorConfig d;
    d.patch_size = patch_size;
    d.schedule = {{4, 2}, {8, 2}, {8, 1}};
    return d;
}

/// Lesion samples cut from random phantoms.
inline std::vector<LesionRecord> phantom_lesions(int patch_size, std::size_t n_slices, std::uint64_t seed,
                                                 int slice_size = 96) {
    PhantomConfig cfg;
    cfg.rows = cfg.cols = slice_size;
    cfg.min_lesions = 1;
    cfg.max_lesions = 2;
    cfg.lesion_radius_min = patch_size * 0.1;
    cfg.lesion_radius_max = patch_size * 0.2;
    std::vector<SliceSample> slices;
    for (std::size_t i = 0; i < n_slices; ++i) {
        auto ph = generate_phantom(seed * 1000 + i, cfg);
        slices.push_back({ph.slice, ph.liver, ph.lesions, kUnitWindow});
    }
    return decompose_slices(slices, patch_size);
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("lesyn_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

}  // namespace lesyn::testing
