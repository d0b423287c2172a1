#pragma once

#include <array>
#include <optional>
#include <span>

#include "structrep/adapter.hpp"
#include "structrep/objectives.hpp"

namespace structrep {

using LossPair = std::array<double, 2>;  // {contrastive, ordinal}

double softplus(double x) noexcept;
/// Inverse of softplus for v > 0.
double softplus_inverse(double v);

/// Lower bound on the stored pre-images; softplus(-25) ~ 1.4e-11 keeps every materialized
/// meta-parameter representable and strictly positive.
inline constexpr double kMinPreimage = -25.0;

struct MetaParams {
    double lambda_base = 1.0;
    double lambda_ord = 2.5;
    double t_ctr = 13.0;
    double t_ord = 1.0;

    bool operator==(const MetaParams&) const = default;
};

/// Meta-parameters stored as softplus pre-images plus GradNorm bookkeeping.
struct MetaState {
    /// Pre-images of {lambda_base, lambda_ord, t_ctr, t_ord}, in that order.
    std::array<double, 4> rho{};
    /// Unweighted batch-mean losses of the first training batch.
    std::optional<LossPair> initial_losses;
    double gamma = 0.5;
    double beta = 0.01;
    double eta_meta = 1e-3;
    double epsilon = 1e-8;

    static MetaState from_values(const MetaParams& init, double gamma, double beta, double eta_meta,
                                 double epsilon);
    MetaParams materialized() const;

    bool operator==(const MetaState&) const = default;
};

/// Weighting with the materialized meta-parameters substituted into `flags`.
Weighting apply_meta(const Weighting& flags, const MetaParams& params);

/// r_k = (Lt_k / mean(Lt))^gamma with Lt_k = L_k / (L0_k + eps). Returns (1, 1) when both
/// normalized losses are zero.
LossPair difficulty_ratios(const LossPair& current, const LossPair& initial, double gamma, double epsilon);

struct Targets {
    double mean = 0.0;  // (G_ctr + G_ord) / 2
    LossPair target{};  // mean * r_k
};

Targets targets(const LossPair& grad_norms, const LossPair& ratios);

/// |G_ctr - G*_ctr| + |G_ord - G*_ord| + beta * entropy_reg(gates).
double meta_objective(const LossPair& grad_norms, const LossPair& target, double beta,
                      std::span<const GateWeights> gates);

/// L2 norms of the adapter gradients of the two weighted terms of the batch objective.
LossPair grad_norms(const SampleGradients& table, const Weighting& weighting);
LossPair grad_norms(const Adapter& adapter, const Matrix& base, const Batch& batch,
                    const ObjectiveParams& params, const Weighting& weighting);

struct GradNormSnapshot {
    LossPair grad_norms{};
    LossPair normalized_losses{};
    LossPair ratios{};
    double mean_norm = 0.0;
    LossPair target{};
    double objective = 0.0;
};

/// Evaluates every GradNorm quantity for the current meta-state. Requires initial_losses.
GradNormSnapshot snapshot(const MetaState& meta, const SampleGradients& table, const Weighting& flags);

struct MetaStepResult {
    MetaState state;
    GradNormSnapshot before;
    std::array<double, 4> gradient{};  // central-difference dJ/drho
};

/// One meta update rho <- rho - eta_meta * dJ/drho with the adapter held fixed. The gradient is
/// a central difference per coordinate with step 1e-4 * max(1, |rho_j|), probed in a fixed
/// order; the difficulty ratios keep L0 fixed. Throws NumericalError on a non-finite probe.
MetaStepResult meta_step(const MetaState& meta, const SampleGradients& table, const Weighting& flags);
MetaStepResult meta_step(const MetaState& meta, const Adapter& adapter, const Matrix& base, const Batch& batch,
                         const ObjectiveParams& params, const Weighting& flags);

}  // namespace structrep
