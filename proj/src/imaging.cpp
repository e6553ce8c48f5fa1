#include "lesyn/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lesyn {

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::real: return "real";
        case Provenance::phantom: return "phantom";
        case Provenance::synthetic: return "synthetic";
    }
    return "real";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "real") return Provenance::real;
    if (s == "phantom") return Provenance::phantom;
    if (s == "synthetic") return Provenance::synthetic;
    throw InvalidArgument("unknown provenance '" + s + "'");
}

Mask::Mask(Grid<std::uint8_t> g) : Grid<std::uint8_t>(std::move(g)) {
    for (auto v : values())
        if (v > 1) throw InvalidArgument("mask values must be 0 or 1");
}

Mask Mask::from_values(const FloatGrid& values, float threshold) {
    Mask m(values.rows(), values.cols());
    for (std::size_t i = 0; i < values.size(); ++i) m.storage()[i] = values.storage()[i] > threshold ? 1 : 0;
    return m;
}

std::size_t Mask::foreground_count() const noexcept {
    return static_cast<std::size_t>(std::count(storage().begin(), storage().end(), std::uint8_t{1}));
}

FloatGrid Mask::to_float() const {
    FloatGrid g(rows(), cols());
    for (std::size_t i = 0; i < size(); ++i) g.storage()[i] = storage()[i];
    return g;
}

BoundingBox bounding_box(const Mask& mask) noexcept {
    BoundingBox b{mask.rows(), -1, mask.cols(), -1};
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c)
            if (mask(r, c)) {
                b.row_min = std::min(b.row_min, r);
                b.row_max = std::max(b.row_max, r);
                b.col_min = std::min(b.col_min, c);
                b.col_max = std::max(b.col_max, c);
            }
    return b;
}

std::pair<double, double> centroid(const Mask& mask) {
    double sr = 0, sc = 0;
    std::size_t count = 0;
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c)
            if (mask(r, c)) {
                sr += r;
                sc += c;
                ++count;
            }
    if (count == 0) throw EmptyMaskError();
    return {sr / static_cast<double>(count), sc / static_cast<double>(count)};
}

bool contained_in(const Mask& inner, const Mask& outer) {
    if (!inner.same_shape(outer)) throw InvalidArgument("contained_in: shape mismatch");
    for (std::size_t i = 0; i < inner.size(); ++i)
        if (inner.storage()[i] && !outer.storage()[i]) return false;
    return true;
}

std::vector<Mask> connected_components(const Mask& mask) {
    std::vector<Mask> out;
    Grid<int> label(mask.rows(), mask.cols(), -1);
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) {
            if (!mask(r, c) || label(r, c) >= 0) continue;
            const int id = static_cast<int>(out.size());
            Mask comp(mask.rows(), mask.cols());
            stack.assign(1, {r, c});
            label(r, c) = id;
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                comp(y, x) = 1;
                constexpr int dy[] = {-1, 1, 0, 0};
                constexpr int dx[] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int ny = y + dy[k], nx = x + dx[k];
                    if (mask.contains(ny, nx) && mask(ny, nx) && label(ny, nx) < 0) {
                        label(ny, nx) = id;
                        stack.emplace_back(ny, nx);
                    }
                }
            }
            out.push_back(std::move(comp));
        }
    return out;
}

void Slice::validate() const {
    if (pixels.empty()) throw InvalidArgument("slice is empty");
    if (!(row_mm > 0) || !(col_mm > 0)) throw InvalidArgument("slice spacing must be positive");
}

void HuWindow::validate() const {
    if (!(lo < hi)) throw InvalidArgument("degenerate HU window: lo must be < hi");
}

double HuWindow::to_unit(double hu) const noexcept { return std::clamp((hu - lo) / (hi - lo), 0.0, 1.0); }

DensityHistogram::DensityHistogram(std::vector<double> bins, double tolerance) : bins_(std::move(bins)) {
    if (bins_.empty()) throw InvalidArgument("histogram has no bins");
    double total = 0;
    for (double b : bins_) {
        if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidArgument("histogram bins must be finite and >= 0");
        total += b;
    }
    if (std::abs(total - 1.0) > tolerance)
        throw InvalidArgument("histogram mass " + std::to_string(total) + " is not 1");
}

DensityHistogram DensityHistogram::from_weights(std::vector<double> weights) {
    double total = 0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("histogram weights must be finite and >= 0");
        total += w;
    }
    if (!(total > 0)) throw InvalidArgument("histogram weights sum to zero");
    for (double& w : weights) w /= total;
    return DensityHistogram(std::move(weights), 1e-9);
}

DensityHistogram DensityHistogram::uniform(int n_bins) {
    if (n_bins <= 0) throw InvalidArgument("n_bins must be positive");
    return from_weights(std::vector<double>(static_cast<std::size_t>(n_bins), 1.0));
}

DensityHistogram DensityHistogram::delta(int bin, int n_bins) {
    if (bin < 0 || bin >= n_bins) throw InvalidArgument("delta bin out of range");
    std::vector<double> b(static_cast<std::size_t>(n_bins), 0.0);
    b[static_cast<std::size_t>(bin)] = 1.0;
    return DensityHistogram(std::move(b));
}

double DensityHistogram::mean() const noexcept {
    double m = 0;
    const double n = static_cast<double>(bins_.size());
    for (std::size_t i = 0; i < bins_.size(); ++i) m += bins_[i] * (static_cast<double>(i) + 0.5) / n;
    return m;
}

DensityHistogram gaussian_mixture_histogram(std::span<const double> means, std::span<const double> widths,
                                            std::span<const double> weights, int n_bins) {
    if (means.empty() || means.size() != widths.size() || means.size() != weights.size())
        throw InvalidArgument("mixture: means, widths and weights must have equal non-zero length");
    std::vector<double> bins(static_cast<std::size_t>(n_bins), 0.0);
    for (std::size_t k = 0; k < means.size(); ++k) {
        if (!(means[k] >= 0.0 && means[k] <= n_bins - 1)) throw InvalidArgument("mixture mean out of range");
        if (!(widths[k] >= 0.0)) throw InvalidArgument("mixture width must be >= 0");
        if (!(weights[k] > 0.0)) throw InvalidArgument("mixture weights must be positive");
        std::vector<double> comp(bins.size(), 0.0);
        if (widths[k] == 0.0) {
            comp[static_cast<std::size_t>(std::lround(means[k]))] = 1.0;
        } else {
            for (int i = 0; i < n_bins; ++i) {
                const double z = (i - means[k]) / widths[k];
                comp[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z);
            }
        }
        const double total = std::accumulate(comp.begin(), comp.end(), 0.0);
        for (std::size_t i = 0; i < bins.size(); ++i) bins[i] += weights[k] * comp[i] / total;
    }
    return DensityHistogram::from_weights(std::move(bins));
}

void LesionSample::validate() const {
    if (patch.rows() != patch.cols() || patch.empty()) throw InvalidArgument("lesion patch must be square");
    if (!mask.same_shape(patch)) throw InvalidArgument("lesion mask/patch shape mismatch");
    if (!mask.any()) throw EmptyMaskError("lesion sample mask is empty");
    for (float v : patch.values())
        if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("lesion patch values must lie in [0,1]");
}

FloatGrid normalize_hu(const FloatGrid& pixels, const HuWindow& window) {
    window.validate();
    FloatGrid out(pixels.rows(), pixels.cols());
    for (std::size_t i = 0; i < pixels.size(); ++i)
        out.storage()[i] = static_cast<float>(window.to_unit(pixels.storage()[i]));
    return out;
}

namespace {

float bilinear(const FloatGrid& g, double r, double c) {
    r = std::clamp(r, 0.0, static_cast<double>(g.rows() - 1));
    c = std::clamp(c, 0.0, static_cast<double>(g.cols() - 1));
    const int r0 = static_cast<int>(std::floor(r)), c0 = static_cast<int>(std::floor(c));
    const int r1 = std::min(r0 + 1, g.rows() - 1), c1 = std::min(c0 + 1, g.cols() - 1);
    const double fr = r - r0, fc = c - c0;
    const double top = g(r0, c0) * (1 - fc) + g(r0, c1) * fc;
    const double bottom = g(r1, c0) * (1 - fc) + g(r1, c1) * fc;
    return static_cast<float>(top * (1 - fr) + bottom * fr);
}

}  // namespace

LesionSample extract_lesion_sample(const Slice& slice, const Mask& lesion_mask, int patch_size,
                                   const HuWindow& window) {
    slice.validate();
    if (patch_size <= 0) throw InvalidArgument("patch_size must be positive");
    if (!lesion_mask.same_shape(slice.pixels)) throw InvalidArgument("lesion mask does not match slice shape");
    const BoundingBox box = bounding_box(lesion_mask);
    if (box.empty()) throw EmptyMaskError();

    const FloatGrid unit = normalize_hu(slice.pixels, window);
    const int center_r = (box.row_min + box.row_max) / 2;
    const int center_c = (box.col_min + box.col_max) / 2;
    const int top = center_r - patch_size / 2;
    const int left = center_c - patch_size / 2;
    const bool fits = box.row_min >= top && box.row_max < top + patch_size && box.col_min >= left &&
                      box.col_max < left + patch_size;

    LesionSample s{FloatGrid(patch_size, patch_size), Mask(patch_size, patch_size), !fits};
    if (fits) {
        for (int r = 0; r < patch_size; ++r)
            for (int c = 0; c < patch_size; ++c) {
                const int sr = std::clamp(top + r, 0, unit.rows() - 1);
                const int sc = std::clamp(left + c, 0, unit.cols() - 1);
                s.patch(r, c) = unit(sr, sc);
                s.mask(r, c) = lesion_mask.contains(top + r, left + c) ? lesion_mask(top + r, left + c) : 0;
            }
    } else {
        const double scale = 0.9 * patch_size / std::max(box.height(), box.width());
        const double cr = (box.row_min + box.row_max) / 2.0;
        const double cc = (box.col_min + box.col_max) / 2.0;
        const double half = (patch_size - 1) / 2.0;
        for (int r = 0; r < patch_size; ++r)
            for (int c = 0; c < patch_size; ++c) {
                const double sr = cr + (r - half) / scale;
                const double sc = cc + (c - half) / scale;
                s.patch(r, c) = bilinear(unit, sr, sc);
                const int nr = static_cast<int>(std::lround(sr)), nc = static_cast<int>(std::lround(sc));
                s.mask(r, c) = lesion_mask.contains(nr, nc) ? lesion_mask(nr, nc) : 0;
            }
        if (!s.mask.any()) throw EmptyMaskError("lesion vanished while rescaling");
    }
    return s;
}

DensityHistogram compute_histogram(const FloatGrid& patch, const Mask& mask, int n_bins) {
    if (n_bins <= 0) throw InvalidArgument("n_bins must be positive");
    if (!mask.same_shape(patch)) throw InvalidArgument("compute_histogram: patch/mask shape mismatch");
    std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < patch.size(); ++i) {
        if (!mask.storage()[i]) continue;
        const double v = patch.storage()[i];
        if (std::isnan(v)) throw InvalidArgument("compute_histogram: NaN intensity");
        const int bin = std::clamp(static_cast<int>(std::floor(v * n_bins)), 0, n_bins - 1);
        counts[static_cast<std::size_t>(bin)] += 1.0;
        ++total;
    }
    if (total == 0) throw EmptyMaskError();
    for (double& c : counts) c /= static_cast<double>(total);
    return DensityHistogram(std::move(counts), 1e-9);
}

double histogram_l1(const DensityHistogram& a, const DensityHistogram& b) {
    if (a.size() != b.size()) throw InvalidArgument("histogram_l1: bin count mismatch");
    double d = 0;
    for (int i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

double histogram_quantile(const DensityHistogram& h, double q) {
    q = std::clamp(q, 0.0, 1.0);
    const double n = h.size();
    double cum = 0;
    for (int i = 0; i < h.size(); ++i) {
        const double next = cum + h[i];
        if (h[i] > 0 && q <= next) return (i + (q - cum) / h[i]) / n;
        cum = next;
    }
    for (int i = h.size() - 1; i >= 0; --i)
        if (h[i] > 0) return (i + 1) / n;
    return 1.0;
}

FloatGrid gaussian_blur(const FloatGrid& g, double sigma) {
    if (sigma < 0) throw InvalidArgument("blur sigma must be >= 0");
    if (sigma == 0) return g;
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0;
    for (int k = -radius; k <= radius; ++k) total += kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    for (double& k : kernel) k /= total;

    Grid<double> tmp(g.rows(), g.cols(), 0.0);
    for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) {
            double acc = 0;
            for (int k = -radius; k <= radius; ++k)
                if (c + k >= 0 && c + k < g.cols()) acc += kernel[static_cast<std::size_t>(k + radius)] * g(r, c + k);
            tmp(r, c) = acc;
        }
    FloatGrid out(g.rows(), g.cols());
    for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) {
            double acc = 0;
            for (int k = -radius; k <= radius; ++k)
                if (r + k >= 0 && r + k < g.rows()) acc += kernel[static_cast<std::size_t>(k + radius)] * tmp(r + k, c);
            out(r, c) = static_cast<float>(acc);
        }
    return out;
}

}  // namespace lesyn
