#include "lesyn/implant.hpp"

#include <cmath>
#include <exception>
#include <numbers>

#include "lesyn/rng.hpp"

namespace lesyn {

namespace {

double normalized_degrees(double deg) {
    double r = std::fmod(deg, 360.0);
    return r < 0 ? r + 360.0 : r;
}

float bilinear(const FloatGrid& g, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(g.rows() - 1));
    x = std::clamp(x, 0.0, static_cast<double>(g.cols() - 1));
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, g.rows() - 1), x1 = std::min(x0 + 1, g.cols() - 1);
    const double fy = y - y0, fx = x - x0;
    const double top = (1 - fx) * g(y0, x0) + fx * g(y0, x1);
    const double bottom = (1 - fx) * g(y1, x0) + fx * g(y1, x1);
    return static_cast<float>((1 - fy) * top + fy * bottom);
}

}  // namespace

void ImplantSpec::validate() const {
    if (!(scale > 0)) throw InvalidArgument("implant scale must be positive");
    if (!(feather_sigma >= 0)) throw InvalidArgument("feather_sigma must be >= 0");
    if (max_retries <= 0) throw InvalidArgument("max_retries must be positive");
    if (!std::isfinite(rotation_deg)) throw InvalidArgument("rotation must be finite");
}

void ImplantRanges::validate() const {
    if (!(scale_min > 0) || !(scale_max >= scale_min)) throw InvalidArgument("need 0 < scale_min <= scale_max");
    if (!(feather_sigma >= 0)) throw InvalidArgument("feather_sigma must be >= 0");
    if (max_retries <= 0) throw InvalidArgument("max_retries must be positive");
}

ImplantSpec draw_implant_spec(std::mt19937_64& rng, const ImplantRanges& ranges) {
    ranges.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ImplantSpec s;
    s.rotation_deg = 360.0 * unit(rng);
    s.scale = ranges.scale_min + (ranges.scale_max - ranges.scale_min) * unit(rng);
    s.seed = rng();
    s.feather_sigma = ranges.feather_sigma;
    s.max_retries = ranges.max_retries;
    return s;
}

TransformedLesion transform_lesion(const FloatGrid& patch, const Mask& mask, double rotation_deg, double scale) {
    if (!patch.same_shape(mask)) throw InvalidArgument("transform_lesion: patch and mask shapes differ");
    if (!mask.any()) throw EmptyMaskError("transform_lesion: empty mask");
    if (!(scale > 0)) throw InvalidArgument("transform_lesion: scale must be positive");
    const double deg = normalized_degrees(rotation_deg);
    if (deg == 0.0 && scale == 1.0) return {patch, mask};

    const auto [cy, cx] = centroid(mask);
    const double th = deg * std::numbers::pi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const int rows = mask.rows(), cols = mask.cols();

    // Every source foreground pixel must land on the canvas.
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!mask(r, c)) continue;
            const double dy = r - cy, dx = c - cx;
            const double ty = cy + scale * (ct * dy - st * dx), tx = cx + scale * (st * dy + ct * dx);
            if (ty < -0.5 || tx < -0.5 || ty > rows - 0.5 || tx > cols - 0.5)
                throw TransformError("transformed lesion exceeds the " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + " canvas");
        }

    TransformedLesion out{FloatGrid(rows, cols), Mask(rows, cols)};
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double dy = r - cy, dx = c - cx;
            const double sy = cy + (ct * dy + st * dx) / scale, sx = cx + (-st * dy + ct * dx) / scale;
            out.patch(r, c) = bilinear(patch, sy, sx);
            const long my = std::lround(sy), mx = std::lround(sx);
            if (mask.contains(static_cast<int>(my), static_cast<int>(mx)))
                out.mask(r, c) = mask(static_cast<int>(my), static_cast<int>(mx));
        }
    if (!out.mask.any()) throw TransformError("lesion vanished under scale " + std::to_string(scale));
    return out;
}

FloatGrid feather_alpha(const Mask& mask, double sigma) {
    if (!(sigma >= 0)) throw InvalidArgument("feather sigma must be >= 0");
    if (sigma == 0) return mask.to_float();
    const double reach = 4.0 * sigma;
    const int radius = static_cast<int>(std::floor(reach));
    const int side = 2 * radius + 1;
    std::vector<double> kernel(static_cast<std::size_t>(side) * side, 0.0);
    double total = 0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dy * dy + dx * dx > reach * reach) continue;
            const double v = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            kernel[static_cast<std::size_t>((dy + radius) * side + dx + radius)] = v;
            total += v;
        }
    for (auto& v : kernel) v /= total;

    std::vector<double> acc(mask.size(), 0.0);
    const int rows = mask.rows(), cols = mask.cols();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!mask(r, c)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int y = r + dy;
                if (y < 0 || y >= rows) continue;
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int x = c + dx;
                    if (x < 0 || x >= cols) continue;
                    acc[static_cast<std::size_t>(y) * cols + x] +=
                        kernel[static_cast<std::size_t>((dy + radius) * side + dx + radius)];
                }
            }
        }
    FloatGrid alpha(rows, cols);
    for (std::size_t i = 0; i < acc.size(); ++i) alpha.storage()[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
    return alpha;
}

Slice blend(const Slice& slice, const FloatGrid& lesion, const Mask& mask, double feather_sigma) {
    if (!slice.pixels.same_shape(lesion) || !slice.pixels.same_shape(mask))
        throw InvalidArgument("blend: slice, lesion and mask shapes differ");
    const FloatGrid alpha = feather_alpha(mask, feather_sigma);
    Slice out = slice;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const float a = alpha.storage()[i];
        if (a == 0.0f) continue;
        out.pixels.storage()[i] = a * lesion.storage()[i] + (1.0f - a) * slice.pixels.storage()[i];
    }
    return out;
}

ImplantResult place_lesion(const Slice& slice, const Mask& liver, const FloatGrid& lesion_patch,
                           const Mask& lesion_mask, const ImplantSpec& spec) {
    spec.validate();
    if (!slice.pixels.same_shape(liver)) throw InvalidArgument("place_lesion: slice and liver shapes differ");
    if (!liver.any()) throw EmptyMaskError("place_lesion: empty liver mask");
    const auto t = transform_lesion(lesion_patch, lesion_mask, spec.rotation_deg, spec.scale);
    const auto [tcy, tcx] = centroid(t.mask);
    const int anchor_r = static_cast<int>(std::lround(tcy)), anchor_c = static_cast<int>(std::lround(tcx));

    std::vector<std::pair<int, int>> liver_pixels, lesion_pixels;
    for (int r = 0; r < liver.rows(); ++r)
        for (int c = 0; c < liver.cols(); ++c)
            if (liver(r, c)) liver_pixels.emplace_back(r, c);
    for (int r = 0; r < t.mask.rows(); ++r)
        for (int c = 0; c < t.mask.cols(); ++c)
            if (t.mask(r, c)) lesion_pixels.emplace_back(r, c);

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> pick(0, liver_pixels.size() - 1);
    for (int attempt = 1; attempt <= spec.max_retries; ++attempt) {
        const auto [pr, pc] = liver_pixels[pick(rng)];
        const int off_r = pr - anchor_r, off_c = pc - anchor_c;
        bool fits = true;
        for (const auto& [r, c] : lesion_pixels) {
            const int y = r + off_r, x = c + off_c;
            if (!liver.contains(y, x) || !liver(y, x)) {
                fits = false;
                break;
            }
        }
        if (!fits) continue;

        FloatGrid lesion_full = slice.pixels;
        Mask mask_full(slice.pixels.rows(), slice.pixels.cols());
        for (int r = 0; r < t.patch.rows(); ++r)
            for (int c = 0; c < t.patch.cols(); ++c) {
                const int y = r + off_r, x = c + off_c;
                if (!lesion_full.contains(y, x)) continue;
                lesion_full(y, x) = t.patch(r, c);
                mask_full(y, x) = t.mask(r, c);
            }
        ImplantResult out;
        out.slice = blend(slice, lesion_full, mask_full, spec.feather_sigma);
        out.slice.provenance = Provenance::synthetic;
        out.lesion_mask = std::move(mask_full);
        out.applied = {normalized_degrees(spec.rotation_deg), spec.scale, off_r, off_c, attempt};
        return out;
    }
    throw PlacementError("no placement inside the liver after " + std::to_string(spec.max_retries) + " attempts",
                         spec.max_retries);
}

BuildReport build_synthetic_dataset(const std::vector<SliceSample>& healthy, const std::vector<Mask>& shape_pool,
                                    const std::vector<DensityHistogram>& histogram_pool,
                                    const GeneratorSnapshot& model, std::size_t n_samples, SynthesisMode mode,
                                    std::uint64_t seed, const BuildOptions& options) {
    if (healthy.empty() || shape_pool.empty()) throw InvalidArgument("build_synthetic_dataset: empty pool");
    if (mode == SynthesisMode::mask_plus_density && histogram_pool.empty())
        throw InvalidArgument("build_synthetic_dataset: empty histogram pool");
    if (n_samples == 0) throw InvalidArgument("build_synthetic_dataset: n_samples must be positive");
    if (model.mode != mode)
        throw ConfigError("checkpoint was trained in " + to_string(model.mode) + " mode, dataset requested " +
                          to_string(mode));
    options.ranges.validate();
    for (const auto& h : healthy)
        if (!h.lesions.empty()) throw InvalidArgument("build_synthetic_dataset: healthy slice carries lesions");

    const DensityHistogram uniform = DensityHistogram::uniform(model.params.config.hist_bins);
    BuildReport report;
    report.samples.resize(n_samples);
    report.sample_seeds.resize(n_samples);
    report.placement_failures.assign(n_samples, 0);
    std::vector<std::exception_ptr> errors(n_samples);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n_samples; ++i) {
        try {
            const std::uint64_t sample_seed = mix_seed(seed, i);
            report.sample_seeds[i] = sample_seed;
            std::mt19937_64 rng(sample_seed);
            std::uniform_int_distribution<std::size_t> pick_slice(0, healthy.size() - 1);
            std::uniform_int_distribution<std::size_t> pick_shape(0, shape_pool.size() - 1);
            std::uniform_int_distribution<std::size_t> pick_hist(0, histogram_pool.empty() ? 0 : histogram_pool.size() - 1);
            bool done = false;
            std::string last_error;
            for (int draw = 0; draw <= options.max_redraws && !done; ++draw) {
                const auto& base = healthy[pick_slice(rng)];
                const auto& shape = shape_pool[pick_shape(rng)];
                const std::size_t hist_index = pick_hist(rng);
                const auto& hist = mode == SynthesisMode::mask_plus_density ? histogram_pool[hist_index] : uniform;
                const ImplantSpec spec = draw_implant_spec(rng, options.ranges);
                FloatGrid lesion = synthesize(model, {shape, hist});
                for (auto& v : lesion.storage()) v = static_cast<float>(base.window.from_unit(v));
                try {
                    auto placed = place_lesion(base.slice, base.liver, lesion, shape, spec);
                    SliceSample s;
                    s.slice = std::move(placed.slice);
                    s.liver = base.liver;
                    s.lesions = {std::move(placed.lesion_mask)};
                    s.window = base.window;
                    report.samples[i] = std::move(s);
                    done = true;
                } catch (const PlacementError& e) {
                    ++report.placement_failures[i];
                    last_error = e.what();
                } catch (const TransformError& e) {
                    ++report.placement_failures[i];
                    last_error = e.what();
                }
            }
            if (!done)
                throw DatasetBuildError("sample " + std::to_string(i) + ": " +
                                        std::to_string(report.placement_failures[i]) +
                                        " failed placements, last: " + last_error);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (int f : report.placement_failures) report.total_failures += static_cast<std::size_t>(f);
    return report;
}

void write_synthetic_dataset(const std::filesystem::path& root, const BuildReport& report, SynthesisMode mode,
                             std::uint64_t seed, const std::string& checkpoint_digest) {
    std::filesystem::create_directories(root);
    MetaRecord manifest;
    manifest.set("kind", "lesyn-synthetic-dataset");
    manifest.set("mode", to_string(mode));
    manifest.set("seed", std::to_string(seed));
    manifest.set("checkpoint_digest", checkpoint_digest);
    manifest.set("n_samples", std::to_string(report.samples.size()));
    manifest.set("placement_failures", std::to_string(report.total_failures));
    for (std::size_t i = 0; i < report.samples.size(); ++i) {
        const std::string name = sample_dir_name(i);
        write_slice_sample(root / name, report.samples[i]);
        manifest.set(name + ".seed", std::to_string(report.sample_seeds[i]));
        manifest.set(name + ".failures", std::to_string(report.placement_failures[i]));
    }
    manifest.save(root / "manifest");
}

}  // namespace lesyn
