#pragma once

// Mask-to-lesion U-Net generator with a density-histogram branch. The histogram enters
// through a dense layer, is fused with a dense summary of the last decoder block, and the
// fused vector is expanded to a patch-sized map that joins the decoder features right
// before the output convolution.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lesyn/blocks.hpp"
#include "lesyn/imaging.hpp"
#include "lesyn/layers.hpp"
#include "lesyn/params.hpp"

namespace lesyn {

enum class BridgeMode {
    compressed,  // 1x1 conv to one channel before flattening
    literal      // flatten every channel of the last decoder block
};

std::string to_string(BridgeMode m);
BridgeMode bridge_mode_from_string(const std::string& s);

struct GeneratorConfig {
    int patch_size = 64;
    int depth = 0;  // 0: log2(patch_size)
    int base_channels = 64;
    int max_channels = 512;
    std::vector<int> channel_schedule;  // empty: base * 2^i capped at max_channels
    int hist_bins = kDensityBins;
    int hist_dense_units = 100;
    BridgeMode bridge_mode = BridgeMode::compressed;
    int bridge_units = 256;
    double dropout_rate = 0.5;
    int dropout_blocks = 3;
    double leaky_slope = 0.2;
    /// shape_audit warns when the bridge dense layer exceeds this many weights.
    std::size_t bridge_param_budget = 50'000'000;

    int resolved_depth() const;
    std::vector<int> encoder_channels() const;
    std::vector<int> decoder_channels() const;
    void validate() const;
};

enum class ParamInit { normal, zero, one };

struct ParamSpec {
    std::string name;
    std::array<int, 4> shape;
    bool trainable = true;
    ParamInit init = ParamInit::normal;
    std::string block;

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] * shape[3];
    }
};

struct ShapeReport {
    std::vector<ParamSpec> tensors;
    std::size_t trainable_params = 0;
    int encoder_blocks = 0;
    int decoder_blocks = 0;
    std::size_t bridge_params = 0;  // weights + biases of the flatten-to-dense layer
    std::string dominant_block;
    std::size_t dominant_params = 0;
    std::vector<std::string> warnings;

    const ParamSpec& find(const std::string& name) const;
    std::size_t block_params(const std::string& block) const;
    std::string to_text() const;
};

/// Every tensor the generator owns, in canonical order, computed from the config alone.
ShapeReport shape_audit(const GeneratorConfig& config);

template <typename T>
struct GeneratorParams {
    GeneratorConfig config;
    ParamSet<T> tensors;
};

/// Weights ~ N(0, 0.02), biases 0, batch-norm scale 1 / shift 0, running stats (0, 1).
template <typename T = float>
GeneratorParams<T> generator_init(const GeneratorConfig& config, std::uint64_t seed);

struct GeneratorInput {
    Mask mask;
    DensityHistogram histogram;
};

template <typename T>
using BlockTape = blocks::BlockTape<T>;

template <typename T>
struct GeneratorTape {
    Mode mode = Mode::eval;
    std::vector<BlockTape<T>> encoder;
    std::vector<BlockTape<T>> decoder;
    Tensor<T> features;  // last decoder block output
    Tensor<T> bridge_input;
    Tensor<T> bridge_activation;
    Tensor<T> hist_input;
    Tensor<T> hist_activation;
    Tensor<T> fusion_input;
    Tensor<T> head_input;
    Tensor<T> output;
};

/// Batched forward. masks: (n,1,P,P) in {0,1}; histograms: (n,bins,1,1), each row a
/// normalized histogram (sum 1 within 1e-4). Returns (n,1,P,P) in [-1,1].
template <typename T>
Tensor<T> generator_forward(const GeneratorParams<T>& params, const Tensor<T>& masks, const Tensor<T>& histograms,
                            Mode mode, std::uint64_t dropout_seed, GeneratorTape<T>* tape = nullptr);

/// Gradients of every tensor (zeros for running statistics) given d(loss)/d(output).
template <typename T>
ParamSet<T> generator_backward(const GeneratorParams<T>& params, const GeneratorTape<T>& tape,
                               const Tensor<T>& grad_output);

/// Folds the batch statistics recorded in a train-mode tape into the running estimates.
template <typename T>
void commit_batchnorm_stats(GeneratorParams<T>& params, const GeneratorTape<T>& tape);

FloatGrid generator_forward(const GeneratorParams<float>& params, const GeneratorInput& input, Mode mode,
                            std::uint64_t dropout_seed = 0);

template <typename T>
Tensor<T> masks_to_tensor(std::span<const Mask> masks);
template <typename T>
Tensor<T> histograms_to_tensor(std::span<const DensityHistogram> histograms);

}  // namespace lesyn
