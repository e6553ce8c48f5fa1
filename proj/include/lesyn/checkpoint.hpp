#pragma once

// Checkpoint directory: `manifest` key=value record (format version, configs, step, seed,
// mode), gen/<name>.lsf and disc/<name>.lsf per tensor, optim/ Adam moments, `rng` state.

#include <filesystem>
#include <string>

#include "lesyn/dataset.hpp"
#include "lesyn/training.hpp"

namespace lesyn {

inline constexpr int kCheckpointFormat = 1;

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const TrainConfig& config);

struct LoadedCheckpoint {
    TrainState state;
    TrainConfig config;
};

/// Validates every tensor shape against the configs stored in the manifest.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Inference view: generator weights only.
struct GeneratorSnapshot {
    GeneratorParams<float> params;
    SynthesisMode mode = SynthesisMode::mask_plus_density;
    std::int64_t step = 0;
    std::string digest;
};

GeneratorSnapshot load_generator(const std::filesystem::path& dir);

bool is_checkpoint(const std::filesystem::path& dir);

void write_config(MetaRecord& m, const GeneratorConfig& c);
GeneratorConfig read_generator_config(const MetaRecord& m);
void write_config(MetaRecord& m, const DiscriminatorConfig& c);
DiscriminatorConfig read_discriminator_config(const MetaRecord& m);

std::string summarize(const GeneratorConfig& c);

}  // namespace lesyn
