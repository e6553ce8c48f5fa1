#pragma once

// Central finite-difference audit of the hand-written backward passes, in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "lesyn/discriminator.hpp"
#include "lesyn/generator.hpp"

namespace lesyn {

enum class AuditTarget { generator, discriminator, linear };

struct TensorAudit {
    std::string name;
    std::size_t elements = 0;
    /// max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-12) over the tensor
    double max_rel_error = 0;
};

struct AuditReport {
    std::vector<TensorAudit> tensors;
    double max_rel_error = 0;
    std::string worst_tensor;

    bool covers(const std::string& name) const;
    std::string to_text() const;
};

/// Patch 8, depth 2, 8-bin histogram, narrow channels.
GeneratorConfig tiny_generator_config(BridgeMode bridge = BridgeMode::compressed);
/// Patch 8, two conv blocks (the second with batch norm), head conv.
DiscriminatorConfig tiny_discriminator_config();

/// Scalar loss sum(R * output) with fixed random R, train-mode forward (batch statistics, fixed
/// dropout masks) over a batch of two, parameters drawn at a larger scale than training init.
AuditReport audit_generator(const GeneratorConfig& config, std::uint64_t seed, double step = 1e-5);
AuditReport audit_discriminator(const DiscriminatorConfig& config, std::uint64_t seed, double step = 1e-5);
AuditReport audit_linear(std::uint64_t seed, double step = 1e-5);

AuditReport finite_difference_audit(AuditTarget target, std::uint64_t seed);

}  // namespace lesyn
