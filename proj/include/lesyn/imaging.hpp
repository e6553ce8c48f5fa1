#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lesyn/grid.hpp"

namespace lesyn {

inline constexpr int kDensityBins = 100;

enum class Provenance { real, phantom, synthetic };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Binary image. Values are 0 or 1; anything else is rejected on construction.
class Mask : public Grid<std::uint8_t> {
public:
    Mask() = default;
    Mask(int rows, int cols) : Grid<std::uint8_t>(rows, cols, 0) {}
    explicit Mask(Grid<std::uint8_t> g);

    /// Pixels > threshold become foreground.
    static Mask from_values(const FloatGrid& values, float threshold = 0.5f);

    std::size_t foreground_count() const noexcept;
    bool any() const noexcept { return foreground_count() > 0; }
    FloatGrid to_float() const;
};

struct BoundingBox {
    int row_min = 0, row_max = -1, col_min = 0, col_max = -1;
    int height() const noexcept { return row_max - row_min + 1; }
    int width() const noexcept { return col_max - col_min + 1; }
    bool empty() const noexcept { return row_max < row_min; }
};

BoundingBox bounding_box(const Mask& mask) noexcept;

/// Mean (row, col) of foreground pixels. Throws EmptyMaskError on an empty mask.
std::pair<double, double> centroid(const Mask& mask);

/// True when every foreground pixel of `inner` is foreground in `outer`.
bool contained_in(const Mask& inner, const Mask& outer);

/// 4-connected components, ordered by their first pixel in raster order.
std::vector<Mask> connected_components(const Mask& mask);

struct Slice {
    FloatGrid pixels;
    double row_mm = 1.0;
    double col_mm = 1.0;
    Provenance provenance = Provenance::real;

    void validate() const;
};

struct HuWindow {
    double lo = -100.0;
    double hi = 400.0;

    void validate() const;
    double to_unit(double hu) const noexcept;
    double from_unit(double v) const noexcept { return lo + v * (hi - lo); }
};

/// Normalized probability mass over intensity bins of [0, 1].
class DensityHistogram {
public:
    DensityHistogram() = default;
    /// Validates: non-empty, non-negative, sums to 1 within `tolerance`.
    explicit DensityHistogram(std::vector<double> bins, double tolerance = 1e-6);

    /// Rescales non-negative weights to unit mass; rejects an all-zero vector.
    static DensityHistogram from_weights(std::vector<double> weights);
    static DensityHistogram uniform(int n_bins = kDensityBins);
    static DensityHistogram delta(int bin, int n_bins = kDensityBins);

    int size() const noexcept { return static_cast<int>(bins_.size()); }
    double operator[](int i) const noexcept { return bins_[static_cast<std::size_t>(i)]; }
    std::span<const double> bins() const noexcept { return bins_; }
    /// Expected normalized intensity using bin centers.
    double mean() const noexcept;

    bool operator==(const DensityHistogram&) const = default;

private:
    std::vector<double> bins_;
};

/// Discretized Gaussian mixture (means and widths in bin units) renormalized to sum 1.
/// A width of 0 places each component's whole mass on its rounded mean bin.
DensityHistogram gaussian_mixture_histogram(std::span<const double> means, std::span<const double> widths,
                                            std::span<const double> weights, int n_bins = kDensityBins);

struct LesionSample {
    FloatGrid patch;  // normalized intensities in [0, 1]
    Mask mask;
    bool rescaled = false;

    int patch_size() const noexcept { return patch.rows(); }
    void validate() const;
};

/// clip((hu - lo) / (hi - lo), 0, 1) elementwise.
FloatGrid normalize_hu(const FloatGrid& pixels, const HuWindow& window);
inline FloatGrid normalize_hu(const Slice& slice, const HuWindow& window) { return normalize_hu(slice.pixels, window); }

/// Crops a patch centered on the lesion's bounding-box center. Lesions whose box does not
/// fit are isotropically downscaled to 90% of the patch and flagged `rescaled`.
LesionSample extract_lesion_sample(const Slice& slice, const Mask& lesion_mask, int patch_size,
                                   const HuWindow& window);

DensityHistogram compute_histogram(const FloatGrid& patch, const Mask& mask, int n_bins = kDensityBins);

double histogram_l1(const DensityHistogram& a, const DensityHistogram& b);

/// Inverse CDF of the histogram treated as piecewise-uniform over its bins; q in [0, 1].
double histogram_quantile(const DensityHistogram& h, double q);

/// Separable Gaussian blur truncated at radius ceil(4 sigma) with zero padding; sigma 0 is identity.
FloatGrid gaussian_blur(const FloatGrid& g, double sigma);

}  // namespace lesyn
