#pragma once

// Independent reference implementations used as test oracles. Nothing here calls the library
// code it is compared against.

#include <cstdint>
#include <string>
#include <vector>

#include "structrep/adapter.hpp"
#include "structrep/corpus.hpp"
#include "structrep/objectives.hpp"
#include "structrep/random.hpp"

namespace structrep::testing {

/// Random labeled corpus: up to `max_claims` claims over up to `max_aspects` aspects in up to
/// `max_categories` categories. Some claims are unlabeled.
Corpus random_corpus(Rng& rng, int max_claims, int max_aspects, int max_categories, int dim = 3);

struct OraclePairs {
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
    bool operator==(const OraclePairs&) const = default;
};

/// Set comprehension over label tuples: j is positive iff the mapped tuple sets intersect.
OraclePairs oracle_contrastive(const Corpus& pool, std::size_t anchor, Granularity g);
/// j is positive iff some shared key k has d_j(k) == pi(d_i(k)), with the max-rank collision rule.
OraclePairs oracle_ordinal(const Corpus& pool, std::size_t anchor, Granularity g);

/// Batch objective recomputed from scratch: explicit matrix products, normalization, log-sum-exp,
/// hinge, two-way softmax gate and the weighted batch mean. `term` 1 or 2 keeps only the
/// contrastive or ordinal summand.
double reference_objective(const Adapter& adapter, const Matrix& base, const Batch& batch,
                           const ObjectiveParams& params, const Weighting& weighting, int term = 0);

/// Per-sample (l_ctr, l_ord) from scratch.
std::vector<std::pair<double, double>> reference_losses(const Adapter& adapter, const Matrix& base,
                                                        const Batch& batch, const ObjectiveParams& params);

/// Central differences of reference_objective over every entry of down and up.
AdapterGrad fd_gradient(const Adapter& adapter, const Matrix& base, const Batch& batch,
                        const ObjectiveParams& params, const Weighting& weighting, int term = 0,
                        double h = 1e-5);

/// max |a - f| / max(1, |f|) over both blocks.
double max_rel_error(const AdapterGrad& analytic, const AdapterGrad& fd);

/// Calinski-Harabasz written out from the textbook definition on the rows as given.
double reference_calinski_harabasz(const std::vector<std::vector<double>>& points, const std::vector<int>& labels);

/// Random small instance: base table, batch and adapter with non-zero up.
struct RandomInstance {
    Matrix base;
    Batch batch;
    Adapter adapter;
};
RandomInstance random_instance(Rng& rng, int max_dim, int max_rank, int max_batch, int max_pos, int max_neg,
                               bool zero_up = false);

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma = 1.0);

}  // namespace structrep::testing
