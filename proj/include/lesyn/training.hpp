#pragma once

// Alternating adversarial training: one discriminator Adam update on the real batch and
// freshly generated (detached) fakes, then one generator Adam update on the non-saturating
// GAN term plus weighted L1.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lesyn/dataset.hpp"
#include "lesyn/discriminator.hpp"
#include "lesyn/generator.hpp"
#include "lesyn/params.hpp"

namespace lesyn {

enum class SynthesisMode {
    mask_only,          // histogram branch fed a constant uniform histogram, gradient severed
    mask_plus_density
};

std::string to_string(SynthesisMode m);  // "mask" / "mask+density"
SynthesisMode synthesis_mode_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 150;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double gan_weight = 1.0;
    double l1_weight = 100.0;
    double disc_weight = 1.0;  // scales d_loss; 0 freezes the discriminator
    int batch_size = 4;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // steps; 0 disables periodic checkpoints
    std::int64_t max_steps = 0;  // 0: epochs * steps_per_epoch
    SynthesisMode mode = SynthesisMode::mask_plus_density;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, 1e-8}; }
};

struct TrainingBatch {
    Tensor<float> masks;       // (n,1,P,P) in {0,1}
    Tensor<float> histograms;  // (n,bins,1,1)
    Tensor<float> targets;     // (n,1,P,P) in [-1,1]

    int size() const noexcept { return masks.n; }
    void validate() const;
};

TrainingBatch make_batch(const std::vector<LesionRecord>& records, std::span<const std::size_t> indices);

struct TrainState {
    GeneratorParams<float> gen;
    AdamState<float> gen_opt;
    DiscriminatorParams<float> disc;
    AdamState<float> disc_opt;
    std::int64_t step = 0;
    std::mt19937_64 rng;

    bool operator==(const TrainState& o) const;
};

TrainState train_init(const GeneratorConfig& gen, const DiscriminatorConfig& disc, std::uint64_t seed);

struct StepMetrics {
    std::int64_t step = 0;  // 1-based index of the completed step
    double d_loss = 0;
    double g_gan = 0;
    double g_l1 = 0;
};

std::string format_metrics(const StepMetrics& m);  // "step, d_loss, g_gan, g_l1"

/// Advances `state` by one step. Throws TrainingDivergence on a non-finite loss; the state
/// is then partially updated and should be discarded.
StepMetrics train_step(TrainState& state, const TrainingBatch& batch, const TrainConfig& config);

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size);
std::int64_t total_steps(std::size_t dataset_size, const TrainConfig& config);
/// Dataset indices for a global step: epoch-seeded shuffle, consecutive slices of batch_size.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, const TrainConfig& config, std::int64_t step);

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: nothing written
    std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
    TrainState state;
    std::vector<StepMetrics> log;
};

/// Writes `out_dir/metrics.log`, periodic `out_dir/step_NNNNNNN` checkpoints and `out_dir/final`.
TrainResult train(const std::vector<LesionRecord>& dataset, const GeneratorConfig& gen_config,
                  const DiscriminatorConfig& disc_config, const TrainConfig& config, const TrainOptions& options = {});

/// Continues from a saved state to the end of the schedule; the metric log is appended.
TrainResult resume_training(TrainState state, const std::vector<LesionRecord>& dataset, const TrainConfig& config,
                            const TrainOptions& options = {});

}  // namespace lesyn
