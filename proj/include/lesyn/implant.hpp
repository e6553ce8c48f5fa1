#pragma once

// Implanting synthesized lesions into healthy slices: rotate and scale about the mask
// centroid, place at a random liver pixel with full containment, feather-blend.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lesyn/dataset.hpp"
#include "lesyn/synthesis.hpp"

namespace lesyn {

struct ImplantSpec {
    double rotation_deg = 0.0;
    double scale = 1.0;
    std::uint64_t seed = 0;  // placement
    double feather_sigma = 2.0;
    int max_retries = 50;

    void validate() const;
};

struct ImplantRanges {
    double scale_min = 0.7;
    double scale_max = 1.3;
    double feather_sigma = 2.0;
    int max_retries = 50;

    void validate() const;
};

/// rotation ~ U[0,360), scale ~ U[scale_min, scale_max], placement seed from the same stream.
ImplantSpec draw_implant_spec(std::mt19937_64& rng, const ImplantRanges& ranges);

struct ResolvedImplant {
    double rotation_deg = 0;
    double scale = 1;
    int row_offset = 0;  // slice position of the lesion canvas's top-left corner
    int col_offset = 0;
    int attempts = 0;
};

struct ImplantResult {
    Slice slice;
    Mask lesion_mask;
    ResolvedImplant applied;
};

struct TransformedLesion {
    FloatGrid patch;
    Mask mask;
};

/// Inverse-mapped rotation/scale about the mask centroid on a canvas of the input size;
/// bilinear for intensities (edge-clamped), nearest for the mask.
TransformedLesion transform_lesion(const FloatGrid& patch, const Mask& mask, double rotation_deg, double scale);

/// Alpha map: mask convolved with a Gaussian truncated to a disk of radius 4 sigma and
/// clipped to [0,1]. Zero farther than 4 sigma from the mask; the mask itself when sigma is 0.
FloatGrid feather_alpha(const Mask& mask, double sigma);

/// out = alpha * lesion + (1 - alpha) * slice, with lesion and mask aligned to the slice.
Slice blend(const Slice& slice, const FloatGrid& lesion, const Mask& mask, double feather_sigma);

/// `lesion_patch` is in slice intensity units.
ImplantResult place_lesion(const Slice& slice, const Mask& liver, const FloatGrid& lesion_patch,
                           const Mask& lesion_mask, const ImplantSpec& spec);

struct BuildOptions {
    ImplantRanges ranges;
    int max_redraws = 20;  // placement failures tolerated per sample before giving up
};

struct BuildReport {
    std::vector<SliceSample> samples;
    std::vector<std::uint64_t> sample_seeds;
    std::vector<int> placement_failures;
    std::size_t total_failures = 0;
};

/// seed_i = mix_seed(seed, i); samples are built independently and may run concurrently.
BuildReport build_synthetic_dataset(const std::vector<SliceSample>& healthy, const std::vector<Mask>& shape_pool,
                                    const std::vector<DensityHistogram>& histogram_pool,
                                    const GeneratorSnapshot& model, std::size_t n_samples, SynthesisMode mode,
                                    std::uint64_t seed, const BuildOptions& options = {});

/// Sample directories plus a `manifest` with seeds, mode, checkpoint digest and failures.
void write_synthetic_dataset(const std::filesystem::path& root, const BuildReport& report, SynthesisMode mode,
                             std::uint64_t seed, const std::string& checkpoint_digest);

}  // namespace lesyn
