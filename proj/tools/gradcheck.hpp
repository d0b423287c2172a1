#pragma once

#include <cstdint>
#include <string>

#include "structrep/adapter.hpp"
#include "structrep/config.hpp"

namespace structrep::tools {

/// One randomized gradient-check problem.
struct GradcheckInstance {
    int trial = 0;
    Matrix base;
    Batch batch;
    Adapter adapter;
    Weighting weighting;
    ObjectiveParams params;
    MetaState meta;
};

struct GradcheckOutcome {
    double max_rel_error = 0.0;
    bool meta_reproducible = true;
    bool finite = true;
};

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
/// Entrywise relative error |a - f| / max(kGradcheckFloor, |f|) with f the central difference.
inline constexpr double kGradcheckFloor = 1.0;

/// Random instance with d <= 8, r <= 3, B <= 4, K <= 2, M <= 3 under the configuration's flags.
GradcheckInstance random_instance(const TrainingConfig& config, std::uint64_t seed, int trial);

/// Analytic adapter gradient against central differences of the forward objective, plus two
/// identical meta-steps (only when MetaGradNorm is enabled) that must agree bit for bit.
GradcheckOutcome check_instance(const GradcheckInstance& instance, bool with_meta);

std::string instance_to_json(const GradcheckInstance& instance, const GradcheckOutcome& outcome);
GradcheckInstance instance_from_json(const std::string& text);

}  // namespace structrep::tools
