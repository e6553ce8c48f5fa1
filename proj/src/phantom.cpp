#include "lesyn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "lesyn/rng.hpp"

namespace lesyn {

void PhantomConfig::validate() const {
    if (rows < 16 || cols < 16) throw ConfigError("phantom must be at least 16x16");
    if (min_lesions < 0 || max_lesions < min_lesions) throw ConfigError("bad lesion count range");
    if (!(lesion_radius_min > 0) || lesion_radius_max < lesion_radius_min) throw ConfigError("bad lesion radius range");
    if (!(width_min > 0) || width_max < width_min) throw ConfigError("bad histogram width range");
    if (!(mode_min >= 0) || !(mode_max <= 1) || mode_max <= mode_min) throw ConfigError("bad mode range");
    for (double m : lesion_means)
        if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("lesion mean outside [0,1]");
}

FloatGrid smooth_noise(int rows, int cols, double sigma, std::uint64_t seed) {
    const int pad = static_cast<int>(std::ceil(4 * sigma));
    FloatGrid white(rows + 2 * pad, cols + 2 * pad);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : white.storage()) v = static_cast<float>(normal(rng));
    const FloatGrid blurred = gaussian_blur(white, sigma);
    FloatGrid out(rows, cols);
    double sum = 0, sq = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            out(r, c) = blurred(r + pad, c + pad);
            sum += out(r, c);
        }
    const double mean = sum / static_cast<double>(out.size());
    for (float v : out.values()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(out.size()));
    for (auto& v : out.storage()) v = static_cast<float>((v - mean) / (sd > 0 ? sd : 1.0));
    return out;
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Blob {
    double radius;
    std::array<double, 3> amp;    // harmonics 2..4
    std::array<double, 3> phase;
    double rotation;

    double boundary(double theta) const {
        double f = 1.0;
        for (int m = 0; m < 3; ++m) f += amp[m] * std::cos((m + 2) * (theta - rotation) + phase[m]);
        return radius * f;
    }
};

Mask rasterize(const Blob& b, double cr, double cc, int rows, int cols) {
    Mask m(rows, cols);
    const int reach = static_cast<int>(std::ceil(b.radius * 1.5)) + 1;
    for (int r = std::max(0, static_cast<int>(cr) - reach); r <= std::min(rows - 1, static_cast<int>(cr) + reach); ++r)
        for (int c = std::max(0, static_cast<int>(cc) - reach); c <= std::min(cols - 1, static_cast<int>(cc) + reach);
             ++c) {
            const double dy = r - cr, dx = c - cc;
            if (std::hypot(dy, dx) <= b.boundary(std::atan2(dy, dx))) m(r, c) = 1;
        }
    return m;
}

Mask dilate(const Mask& m, int radius) {
    Mask out(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            if (!m(r, c)) continue;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    if (out.contains(r + dy, c + dx) && dy * dy + dx * dx <= radius * radius) out(r + dy, c + dx) = 1;
        }
    return out;
}

double draw_mode(std::mt19937_64& rng, const PhantomConfig& cfg) {
    std::uniform_real_distribution<double> u(cfg.mode_min, cfg.mode_max);
    for (int i = 0; i < 1000; ++i) {
        const double m = u(rng);
        if (std::abs(m - cfg.liver_level) >= cfg.min_contrast) return m;
    }
    throw GenerationError("phantom: no lesion density satisfies the contrast constraint");
}

}  // namespace

PhantomCase generate_phantom(std::uint64_t seed, const PhantomConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(mix_seed(seed, 0x5048414e));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

    PhantomCase out;
    const int rows = cfg.rows, cols = cfg.cols;

    // Liver: rotated ellipse with low-order boundary wobble.
    const double a = cfg.liver_semi_axis_rows * rows * uniform(0.9, 1.1);
    const double b = cfg.liver_semi_axis_cols * cols * uniform(0.9, 1.1);
    const double lr = rows / 2.0 + uniform(-0.05, 0.05) * rows;
    const double lc = cols / 2.0 + uniform(-0.05, 0.05) * cols;
    const double rot = uniform(-0.4, 0.4);
    const double wob_amp = uniform(0.0, 0.06), wob_phase = uniform(0.0, 2 * kPi);
    out.liver = Mask(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double dy = r - lr, dx = c - lc;
            const double y = dy * std::cos(rot) - dx * std::sin(rot);
            const double x = dy * std::sin(rot) + dx * std::cos(rot);
            const double theta = std::atan2(y, x);
            const double rho = std::sqrt((y / a) * (y / a) + (x / b) * (x / b));
            if (rho <= 1.0 + wob_amp * std::cos(3 * theta + wob_phase)) out.liver(r, c) = 1;
        }

    const FloatGrid bg_noise = smooth_noise(rows, cols, 6.0, mix_seed(seed, 1));
    const FloatGrid liver_noise = smooth_noise(rows, cols, 2.5, mix_seed(seed, 2));
    out.slice.pixels = FloatGrid(rows, cols);
    out.slice.provenance = Provenance::phantom;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double v = out.liver(r, c) ? cfg.liver_level + cfg.liver_texture * liver_noise(r, c)
                                             : cfg.background_level + 0.01 * bg_noise(r, c);
            out.slice.pixels(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }

    const int n_lesions = static_cast<int>(std::floor(uniform(cfg.min_lesions, cfg.max_lesions + 1 - 1e-9)));
    const Mask margin_liver = [&] {
        // Erode by one pixel so lesions sit strictly inside the parenchyma.
        Mask inv(rows, cols);
        for (std::size_t i = 0; i < inv.size(); ++i) inv.storage()[i] = out.liver.storage()[i] ? 0 : 1;
        Mask grown = dilate(inv, 1);
        Mask eroded(rows, cols);
        for (std::size_t i = 0; i < eroded.size(); ++i) eroded.storage()[i] = grown.storage()[i] ? 0 : 1;
        return eroded;
    }();
    Mask occupied(rows, cols);
    std::vector<std::pair<int, int>> liver_pixels;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (margin_liver(r, c)) liver_pixels.emplace_back(r, c);
    if (n_lesions > 0 && liver_pixels.empty()) throw GenerationError("phantom: liver too small for lesions");

    for (int k = 0; k < n_lesions; ++k) {
        Blob blob{uniform(cfg.lesion_radius_min, cfg.lesion_radius_max), {}, {}, uniform(0, 2 * kPi)};
        for (int m = 0; m < 3; ++m) {
            blob.amp[m] = uniform(0.0, 0.12);
            blob.phase[m] = uniform(0.0, 2 * kPi);
        }
        Mask lesion;
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            const auto [pr, pc] = liver_pixels[static_cast<std::size_t>(unit(rng) * liver_pixels.size()) %
                                               liver_pixels.size()];
            lesion = rasterize(blob, pr, pc, rows, cols);
            if (!lesion.any() || !contained_in(lesion, margin_liver)) continue;
            const Mask halo = dilate(lesion, 2);
            bool overlap = false;
            for (std::size_t i = 0; i < halo.size() && !overlap; ++i) overlap = halo.storage()[i] && occupied.storage()[i];
            placed = !overlap;
        }
        if (!placed)
            throw GenerationError("phantom: could not place lesion " + std::to_string(k) + " of radius " +
                                  std::to_string(blob.radius) + " inside the liver");
        for (std::size_t i = 0; i < occupied.size(); ++i) occupied.storage()[i] |= lesion.storage()[i];

        // Target density histogram.
        std::vector<double> means, widths, weights;
        if (k < static_cast<int>(cfg.lesion_means.size())) {
            means = {cfg.lesion_means[static_cast<std::size_t>(k)]};
            widths = {uniform(cfg.width_min, cfg.width_max)};
            weights = {1.0};
        } else if (unit(rng) < cfg.bimodal_fraction) {
            means = {draw_mode(rng, cfg), draw_mode(rng, cfg)};
            widths = {uniform(cfg.width_min, cfg.width_max), uniform(cfg.width_min, cfg.width_max)};
            const double w = uniform(0.3, 0.7);
            weights = {w, 1.0 - w};
        } else {
            means = {draw_mode(rng, cfg)};
            widths = {uniform(cfg.width_min, cfg.width_max)};
            weights = {1.0};
        }
        for (double& m : means) m = m * kDensityBins - 0.5;  // normalized intensity -> bin coordinate
        for (double& w : widths) w *= kDensityBins;
        DensityHistogram target = gaussian_mixture_histogram(means, widths, weights);

        // Quantile-match a smooth field inside the lesion to the target distribution.
        const FloatGrid field = smooth_noise(rows, cols, 1.5, mix_seed(seed, 100 + static_cast<std::uint64_t>(k)));
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < lesion.size(); ++i)
            if (lesion.storage()[i]) idx.push_back(i);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t x, std::size_t y) { return field.storage()[x] < field.storage()[y]; });
        for (std::size_t rank = 0; rank < idx.size(); ++rank) {
            const double q = (static_cast<double>(rank) + 0.5) / static_cast<double>(idx.size());
            out.slice.pixels.storage()[idx[rank]] = static_cast<float>(histogram_quantile(target, q));
        }
        out.lesions.push_back(std::move(lesion));
        out.target_histograms.push_back(std::move(target));
    }
    return out;
}

}  // namespace lesyn
