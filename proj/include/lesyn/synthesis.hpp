#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lesyn/checkpoint.hpp"
#include "lesyn/imaging.hpp"

namespace lesyn {

enum class OutputEncoding { normalized, windowed_hu };

enum class PresetKind { unimodal, bimodal, delta };

/// Means and widths are in bin units. Delta presets read means[0] only.
struct HistogramPreset {
    PresetKind kind = PresetKind::unimodal;
    std::vector<double> means;
    std::vector<double> widths;
    std::vector<double> weights;

    static HistogramPreset delta(int bin);
    static HistogramPreset unimodal(double mean, double width);
    static HistogramPreset bimodal(double mean_a, double mean_b, double width_a, double width_b,
                                   double weight_a = 0.5, double weight_b = 0.5);
};

DensityHistogram make_preset(const HistogramPreset& preset, int n_bins = kDensityBins);

/// "delta:50", "unimodal:50,5", "bimodal:20,80,3,3" or "bimodal:20,80,3,3,0.7,0.3".
HistogramPreset parse_preset(const std::string& text);

struct SynthesisRequest {
    Mask mask;
    DensityHistogram histogram;
    OutputEncoding encoding = OutputEncoding::normalized;
    HuWindow window;  // used by windowed_hu
};

/// Eval-mode forward mapped from [-1,1] to [0,1] (or to HU through the window). A mask-only
/// checkpoint ignores the requested histogram and sees the uniform one it was trained with.
FloatGrid synthesize(const GeneratorSnapshot& model, const SynthesisRequest& request);
FloatGrid synthesize(const std::filesystem::path& checkpoint, const SynthesisRequest& request);

/// Rows follow histograms, columns follow masks; tiles are separated by 1-pixel lines of 1.0.
FloatGrid render_grid(const GeneratorSnapshot& model, const std::vector<Mask>& masks,
                      const std::vector<DensityHistogram>& histograms);

/// Writes .png (8-bit) or .lsf depending on the extension.
void export_image(const std::filesystem::path& path, const FloatGrid& unit_values);

}  // namespace lesyn
