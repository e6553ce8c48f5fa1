#pragma once

// Compact encoder-decoder segmenter and the Table-style F1 experiment comparing training
// sets (original / mask synthesis / mask+density synthesis) with one fixed test set.

#include <cstdint>
#include <string>
#include <vector>

#include "lesyn/dataset.hpp"
#include "lesyn/params.hpp"

namespace lesyn {

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    /// 2TP / (2TP + FP + FN); 1 when there is no foreground in either.
    double f1() const noexcept;
};

ConfusionCounts confusion(const Mask& pred, const Mask& truth);
double f1_score(const Mask& pred, const Mask& truth);
/// Micro-average over every pixel of the set.
double f1_score(const std::vector<Mask>& preds, const std::vector<Mask>& truths);

struct SegConfig {
    int depth = 3;
    int base_channels = 32;
    int epochs = 20;
    double learning_rate = 1e-3;
    int batch_size = 8;
    std::uint64_t seed = 0;
    double threshold = 0.5;
    double pos_weight = 1.0;  // weight of foreground pixels in the BCE
    double leaky_slope = 0.2;

    void validate() const;
};

/// Network input is (image, liver mask); target is the union of the lesion masks.
struct SegSample {
    FloatGrid image;  // window-normalized [0,1]
    Mask liver;
    Mask truth;
};

std::vector<SegSample> to_seg_samples(const std::vector<SliceSample>& slices);

struct Segmenter {
    SegConfig config;
    ParamSet<float> tensors;
};

Segmenter segmenter_init(const SegConfig& config, std::uint64_t seed);

/// Logits (n,1,H,W) for inputs (n,2,H,W); H and W divisible by 2^(depth-1).
Tensor<float> segmenter_forward(const Segmenter& model, const Tensor<float>& input);
std::vector<Mask> predict(const Segmenter& model, const std::vector<SegSample>& samples);

struct SegTrainResult {
    Segmenter model;
    std::vector<double> epoch_loss;
};

SegTrainResult train_segmenter(const std::vector<SegSample>& dataset, const SegConfig& config);

struct ExperimentRow {
    std::string label;
    double f1 = 0;  // mean over seeds
    std::vector<std::uint64_t> seeds;
    std::vector<double> per_seed;
    double published_f1 = 0;  // published reference, not an expected value
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;

    const ExperimentRow& row(const std::string& label) const;
    std::string to_text() const;
    std::string to_json() const;
};

inline constexpr double kPublishedF1Original = 0.5996;
inline constexpr double kPublishedF1MaskSynthesis = 0.3409;
inline constexpr double kPublishedF1MaskDensitySynthesis = 0.4013;

/// One segmenter per (training set, seed), all scored on `test`. An empty `real` set drops
/// the original row.
ExperimentReport run_experiment(const std::vector<SegSample>& real, const std::vector<SegSample>& synth_mask,
                                const std::vector<SegSample>& synth_density, const std::vector<SegSample>& test,
                                const SegConfig& config, const std::vector<std::uint64_t>& seeds);

}  // namespace lesyn
