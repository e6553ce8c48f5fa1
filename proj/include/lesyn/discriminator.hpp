#pragma once

// Conditional patch discriminator: sees (mask, image) stacked as channels and emits a map
// of real/fake logits, one per receptive field.

#include <cstdint>
#include <vector>

#include "lesyn/blocks.hpp"
#include "lesyn/generator.hpp"

namespace lesyn {

struct DiscriminatorBlock {
    int channels;
    int stride;
};

struct DiscriminatorConfig {
    int patch_size = 64;
    std::vector<DiscriminatorBlock> schedule = {{64, 2}, {128, 2}, {256, 2}, {512, 1}};
    double leaky_slope = 0.2;
    /// Adds a constant channel holding the histogram's mean intensity (mapped to [-1,1]).
    bool condition_on_histogram = false;

    int input_channels() const noexcept { return condition_on_histogram ? 3 : 2; }
    /// Side length of the logits map.
    int output_size() const;
    void validate() const;

    /// Default schedule with every width divided by `divisor` (desk-scale runs).
    static DiscriminatorConfig scaled(int patch_size, int divisor);
};

std::vector<ParamSpec> discriminator_shapes(const DiscriminatorConfig& config);

template <typename T>
struct DiscriminatorParams {
    DiscriminatorConfig config;
    ParamSet<T> tensors;
};

template <typename T = float>
DiscriminatorParams<T> discriminator_init(const DiscriminatorConfig& config, std::uint64_t seed);

template <typename T>
struct DiscriminatorTape {
    Mode mode = Mode::eval;
    std::vector<blocks::BlockTape<T>> blocks;
    Tensor<T> head_input;
};

/// masks and images are (n,1,P,P); histograms are only read when the config conditions on them.
template <typename T>
Tensor<T> discriminator_forward(const DiscriminatorParams<T>& params, const Tensor<T>& masks, const Tensor<T>& images,
                                Mode mode, DiscriminatorTape<T>* tape = nullptr,
                                const Tensor<T>* histograms = nullptr);

/// Parameter gradients; writes d(loss)/d(image) to `grad_image` when non-null.
template <typename T>
ParamSet<T> discriminator_backward(const DiscriminatorParams<T>& params, const DiscriminatorTape<T>& tape,
                                   const Tensor<T>& grad_logits, Tensor<T>* grad_image = nullptr);

template <typename T>
void commit_batchnorm_stats(DiscriminatorParams<T>& params, const DiscriminatorTape<T>& tape);

}  // namespace lesyn
