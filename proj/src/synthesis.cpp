#include "lesyn/synthesis.hpp"

#include <algorithm>
#include <sstream>

#include "lesyn/lsf.hpp"
#include "lesyn/png.hpp"

namespace lesyn {

namespace {

std::vector<double> parse_numbers(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::logic_error&) {
            throw InvalidArgument("bad number '" + item + "' in preset");
        }
        if (used != item.size()) throw InvalidArgument("bad number '" + item + "' in preset");
        out.push_back(v);
    }
    return out;
}

}  // namespace

HistogramPreset HistogramPreset::delta(int bin) { return {PresetKind::delta, {double(bin)}, {0.0}, {1.0}}; }

HistogramPreset HistogramPreset::unimodal(double mean, double width) {
    return {PresetKind::unimodal, {mean}, {width}, {1.0}};
}

HistogramPreset HistogramPreset::bimodal(double mean_a, double mean_b, double width_a, double width_b,
                                         double weight_a, double weight_b) {
    return {PresetKind::bimodal, {mean_a, mean_b}, {width_a, width_b}, {weight_a, weight_b}};
}

DensityHistogram make_preset(const HistogramPreset& p, int n_bins) {
    const std::size_t modes = p.kind == PresetKind::bimodal ? 2 : 1;
    if (p.means.size() < modes) throw InvalidArgument("preset needs " + std::to_string(modes) + " mean(s)");
    for (std::size_t i = 0; i < modes; ++i)
        if (!(p.means[i] >= 0 && p.means[i] <= n_bins - 1))
            throw InvalidArgument("preset mean outside [0, " + std::to_string(n_bins - 1) + "]");
    if (p.kind == PresetKind::delta) {
        const double m = p.means[0];
        if (m != static_cast<int>(m)) throw InvalidArgument("delta preset needs an integer bin");
        return DensityHistogram::delta(static_cast<int>(m), n_bins);
    }
    if (p.widths.size() < modes) throw InvalidArgument("preset needs a width per mode");
    std::vector<double> weights = p.weights;
    if (weights.empty()) weights.assign(modes, 1.0);
    if (weights.size() < modes) throw InvalidArgument("preset needs a weight per mode");
    for (std::size_t i = 0; i < modes; ++i) {
        if (!(p.widths[i] >= 0)) throw InvalidArgument("preset width must be >= 0");
        if (!(weights[i] > 0)) throw InvalidArgument("preset weights must be positive");
    }
    return gaussian_mixture_histogram(std::span(p.means).first(modes), std::span(p.widths).first(modes),
                                      std::span(weights).first(modes), n_bins);
}

HistogramPreset parse_preset(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw InvalidArgument("preset must look like kind:params, got '" + text + "'");
    const std::string kind = text.substr(0, colon);
    const auto v = parse_numbers(text.substr(colon + 1));
    if (kind == "delta" && v.size() == 1) {
        if (v[0] != static_cast<int>(v[0])) throw InvalidArgument("delta preset needs an integer bin");
        return HistogramPreset::delta(static_cast<int>(v[0]));
    }
    if (kind == "unimodal" && v.size() == 2) return HistogramPreset::unimodal(v[0], v[1]);
    if (kind == "bimodal" && v.size() == 4) return HistogramPreset::bimodal(v[0], v[1], v[2], v[3]);
    if (kind == "bimodal" && v.size() == 6) return HistogramPreset::bimodal(v[0], v[1], v[2], v[3], v[4], v[5]);
    throw InvalidArgument("unrecognized preset '" + text + "'");
}

FloatGrid synthesize(const GeneratorSnapshot& model, const SynthesisRequest& request) {
    const auto& cfg = model.params.config;
    if (request.mask.rows() != cfg.patch_size || request.mask.cols() != cfg.patch_size)
        throw InvalidArgument("mask must be " + std::to_string(cfg.patch_size) + "x" + std::to_string(cfg.patch_size));
    if (request.histogram.size() != cfg.hist_bins)
        throw InvalidArgument("histogram must have " + std::to_string(cfg.hist_bins) + " bins");
    if (request.encoding == OutputEncoding::windowed_hu) request.window.validate();
    const DensityHistogram hist = model.mode == SynthesisMode::mask_only ? DensityHistogram::uniform(cfg.hist_bins)
                                                                         : request.histogram;
    FloatGrid out = generator_forward(model.params, GeneratorInput{request.mask, hist}, Mode::eval);
    for (auto& v : out.storage()) {
        const double unit = std::clamp((static_cast<double>(v) + 1.0) * 0.5, 0.0, 1.0);
        v = static_cast<float>(request.encoding == OutputEncoding::windowed_hu ? request.window.from_unit(unit) : unit);
    }
    return out;
}

FloatGrid synthesize(const std::filesystem::path& checkpoint, const SynthesisRequest& request) {
    return synthesize(load_generator(checkpoint), request);
}

FloatGrid render_grid(const GeneratorSnapshot& model, const std::vector<Mask>& masks,
                      const std::vector<DensityHistogram>& histograms) {
    if (masks.empty() || histograms.empty()) throw InvalidArgument("render_grid needs masks and histograms");
    const int ps = model.params.config.patch_size;
    const int n_rows = static_cast<int>(histograms.size()), n_cols = static_cast<int>(masks.size());
    FloatGrid grid(n_rows * ps + n_rows - 1, n_cols * ps + n_cols - 1, 1.0f);
    for (int i = 0; i < n_rows; ++i)
        for (int j = 0; j < n_cols; ++j) {
            const auto tile = synthesize(model, {masks[static_cast<std::size_t>(j)], histograms[static_cast<std::size_t>(i)]});
            for (int r = 0; r < ps; ++r)
                for (int c = 0; c < ps; ++c) grid(i * (ps + 1) + r, j * (ps + 1) + c) = tile(r, c);
        }
    return grid;
}

void export_image(const std::filesystem::path& path, const FloatGrid& unit_values) {
    const auto ext = path.extension().string();
    if (ext == ".png")
        lsf::write_file(path, png::encode_gray(unit_values));
    else if (ext == ".lsf")
        lsf::write_grid(path, unit_values);
    else
        throw InvalidArgument("unsupported output extension '" + ext + "' (use .png or .lsf)");
}

}  // namespace lesyn
