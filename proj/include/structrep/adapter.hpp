#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "structrep/corpus.hpp"
#include "structrep/matrix.hpp"
#include "structrep/objectives.hpp"

namespace structrep {

/// Residual low-rank map over frozen embeddings: adapted(x) = x + scale * up * (down * x).
/// `down` is r x d, `up` is d x r.
struct Adapter {
    Matrix down;
    Matrix up;
    double scale = 1.0;

    std::size_t dim() const noexcept { return down.cols(); }
    std::size_t rank() const noexcept { return down.rows(); }

    bool operator==(const Adapter&) const = default;
};

struct AdapterGrad {
    Matrix d_down;
    Matrix d_up;

    static AdapterGrad zeros_like(const Adapter& adapter);
    void add_scaled(const AdapterGrad& other, double factor);
    double norm() const;
    bool all_finite() const;
};

/// down ~ N(0, 1/r) entrywise, up = 0, scale = lora_alpha / r. Throws InputError unless 1 <= r <= d.
Adapter init_adapter(std::size_t dim, std::size_t rank, double lora_alpha, std::uint64_t seed);

/// x + scale * up * down * x. Throws InputError on a dimension mismatch.
std::vector<double> forward(const Adapter& adapter, std::span<const double> x);

/// Forward pass that keeps what the backward pass needs.
struct AdaptedEmbedding {
    std::vector<double> hidden;      // down * x
    std::vector<double> normalized;  // adapted(x) / ||adapted(x)||
    double norm = 0.0;               // ||adapted(x)||
};

AdaptedEmbedding embed(const Adapter& adapter, std::span<const double> x);

/// Adds the gradient of a scalar with respect to the adapter parameters, given the gradient
/// `d_normalized` of that scalar with respect to embed(adapter, x).normalized.
void backprop_normalized(const Adapter& adapter, std::span<const double> x, const AdaptedEmbedding& cache,
                         std::span<const double> d_normalized, AdapterGrad& out);

/// A <- A - eta dA, B <- B - eta dB. Throws NumericalError on non-finite gradient entries.
Adapter sgd_step(const Adapter& adapter, const AdapterGrad& grad, double eta_theta);

/// One anchor with its sampled partners. Indices are rows of the base-embedding table.
/// The contrastive loss is defined when ctr_positives is non-empty, the ordinal loss when both
/// ord_positives and ord_negatives are non-empty; an undefined loss counts as 0.
struct BatchMember {
    std::size_t anchor = 0;
    std::vector<std::size_t> ctr_positives;
    std::vector<std::size_t> ctr_negatives;
    std::vector<std::size_t> ord_positives;
    std::vector<std::size_t> ord_negatives;

    bool has_contrastive() const noexcept { return !ctr_positives.empty(); }
    bool has_ordinal() const noexcept { return !ord_positives.empty() && !ord_negatives.empty(); }
    bool operator==(const BatchMember&) const = default;
};

using Batch = std::vector<BatchMember>;

/// Unweighted per-sample losses of a batch and their gradients with respect to the adapter.
/// Nothing here depends on the balancing meta-parameters, so one table serves every
/// weighting probed during a meta-step.
struct SampleGradients {
    std::vector<double> l_ctr;
    std::vector<double> l_ord;
    std::vector<AdapterGrad> grad_ctr;
    std::vector<AdapterGrad> grad_ord;

    std::size_t size() const noexcept { return l_ctr.size(); }
};

SampleGradients sample_gradients(const Adapter& adapter, const Matrix& base, const Batch& batch,
                                 const ObjectiveParams& params);

/// Forward pass only: unweighted (l_ctr, l_ord) per batch member.
std::vector<std::pair<double, double>> batch_losses(const Adapter& adapter, const Matrix& base,
                                                    const Batch& batch, const ObjectiveParams& params);

enum class Term { Total, Contrastive, Ordinal };

struct BackwardResult {
    double objective = 0.0;
    AdapterGrad grad;
    std::vector<PerSampleLosses> samples;
};

/// Weighted objective (or one of its two terms) and its exact adapter gradient.
BackwardResult combine(const SampleGradients& table, const Weighting& weighting, Term term = Term::Total);

/// Batch objective and its adapter gradient. Throws InputError on an empty batch.
BackwardResult backward(const Adapter& adapter, const Matrix& base, const Batch& batch,
                        const ObjectiveParams& params, const Weighting& weighting);

/// Stacks the embeddings of a corpus into an N x d table.
Matrix embedding_table(const Corpus& corpus);

}  // namespace structrep
