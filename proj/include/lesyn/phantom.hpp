#pragma once

#include <cstdint>
#include <vector>

#include "lesyn/imaging.hpp"

namespace lesyn {

/// Knobs for the procedural liver phantom. Intensities are in normalized units.
struct PhantomConfig {
    int rows = 128;
    int cols = 128;
    int min_lesions = 0;
    int max_lesions = 3;
    double lesion_radius_min = 4.0;
    double lesion_radius_max = 10.0;
    double liver_semi_axis_rows = 0.34;  // fraction of rows
    double liver_semi_axis_cols = 0.40;  // fraction of cols
    double background_level = 0.08;
    double liver_level = 0.5;
    double liver_texture = 0.02;
    /// Lesion density modes keep at least this distance from the parenchyma level.
    double min_contrast = 0.15;
    double mode_min = 0.06;
    double mode_max = 0.94;
    double width_min = 0.03;  // histogram mode width, normalized units
    double width_max = 0.06;
    double bimodal_fraction = 0.2;
    /// When non-empty, lesion k uses this unimodal mean instead of a random one.
    std::vector<double> lesion_means;

    void validate() const;
};

struct PhantomCase {
    Slice slice;
    Mask liver;
    std::vector<Mask> lesions;
    std::vector<DensityHistogram> target_histograms;
};

/// Deterministic per (seed, config): an irregular elliptical liver on a dark background with
/// up to max_lesions blob lesions strictly inside it. Lesion pixels are quantile-matched to
/// their target histogram over a smooth random field, so texture is spatially coherent.
PhantomCase generate_phantom(std::uint64_t seed, const PhantomConfig& config);

/// Zero-mean, unit-variance Gaussian-correlated noise field.
FloatGrid smooth_noise(int rows, int cols, double sigma, std::uint64_t seed);

}  // namespace lesyn
