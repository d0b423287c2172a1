#pragma once

#include <span>
#include <vector>

namespace structrep {

/// Guard below which a vector is treated as zero and cannot be normalized.
inline constexpr double kNormEpsilon = 1e-12;

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> v);

/// x / ||x||_2. Throws NumericalError when ||x||_2 <= kNormEpsilon.
std::vector<double> normalize(std::span<const double> v);

/// Cosine similarity clamped to [-1, 1].
double cosine_sim(std::span<const double> u, std::span<const double> v);
/// 1 - cosine_sim, in [0, 2].
double cosine_dist(std::span<const double> u, std::span<const double> v);

struct ObjectiveParams {
    double tau = 0.07;        // contrastive temperature
    double margin_m0 = 0.05;  // ordinal margin

    void validate() const;
};

/// Loss value plus its partial derivatives with respect to each anchor-positive and
/// anchor-negative similarity.
struct SimilarityLoss {
    double value = 0.0;
    std::vector<double> d_positive;
    std::vector<double> d_negative;
};

/// Multi-positive contrastive loss on precomputed similarities:
///   -log( sum_k e^{s_k/tau} / (sum_k e^{s_k/tau} + sum_m e^{s_m/tau}) )
/// evaluated with a max shift. Requires at least one positive.
SimilarityLoss contrastive_from_similarities(std::span<const double> positive_sims,
                                             std::span<const double> negative_sims, double tau);

/// Ordinal mean-margin hinge on precomputed similarities:
///   max(0, mean_k (1 - s_k) - mean_m (1 - s_m) + m0)
/// Requires at least one positive and one negative.
SimilarityLoss ordinal_from_similarities(std::span<const double> positive_sims,
                                         std::span<const double> negative_sims, double margin_m0);

double contrastive_loss(std::span<const double> anchor, std::span<const std::vector<double>> positives,
                        std::span<const std::vector<double>> negatives, double tau);

double ordinal_loss(std::span<const double> anchor, std::span<const std::vector<double>> positives,
                    std::span<const std::vector<double>> negatives, double margin_m0);

struct GateWeights {
    double w_ctr = 0.5;
    double w_ord = 0.5;
    double s_ctr = 0.0;
    double s_ord = 0.0;
};

/// Per-sample gate: s_ctr = l_ctr/T_ctr - l_ord/T_ord, s_ord = -s_ctr, w = softmax(s_ctr, s_ord).
GateWeights gate(double l_ctr, double l_ord, double t_ctr, double t_ord);

struct PerSampleLosses {
    double l_ctr = 0.0;
    double l_ord = 0.0;
    GateWeights gate;
};

/// (1/B) sum_i [lambda_base w_ctr l_ctr + lambda_ord w_ord l_ord]. Throws InputError on an empty batch.
double batch_objective(std::span<const PerSampleLosses> samples, double lambda_base, double lambda_ord);

/// Batch mean of the binary gate entropy, in [0, log 2]. Zero weights contribute 0.
double entropy_reg(std::span<const GateWeights> gates);

/// How the two per-sample losses are weighted into the batch objective. Encodes the feature
/// ladder: without the ordinal objective the weights are fixed at (1, 0); without gating they
/// are fixed at (0.5, 0.5).
struct Weighting {
    double lambda_base = 1.0;
    double lambda_ord = 1.0;
    double t_ctr = 1.0;
    double t_ord = 1.0;
    bool ordinal = true;
    bool gating = true;
    /// Treat gate weights as constants when differentiating (stop-gradient variant).
    bool detach_gates = false;
};

GateWeights effective_gate(double l_ctr, double l_ord, const Weighting& weighting);

/// Partial derivatives of the two weighted terms of one sample,
///   term_ctr = lambda_base w_ctr l_ctr and term_ord = lambda_ord w_ord l_ord,
/// with respect to (l_ctr, l_ord), including the dependence of the gate on both losses unless
/// the gates are detached.
struct TermPartials {
    double ctr_by_lctr = 0.0;
    double ctr_by_lord = 0.0;
    double ord_by_lctr = 0.0;
    double ord_by_lord = 0.0;
};

TermPartials term_partials(double l_ctr, double l_ord, const Weighting& weighting);

}  // namespace structrep
