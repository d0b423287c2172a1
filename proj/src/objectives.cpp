#include "structrep/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "structrep/error.hpp"

namespace structrep {

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InputError("dimension mismatch in dot product");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double l2_norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

std::vector<double> normalize(std::span<const double> v) {
    const double norm = l2_norm(v);
    if (!(norm > kNormEpsilon)) throw NumericalError("cannot normalize a near-zero vector");
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x /= norm;
    return out;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
    const auto nu = normalize(u);
    const auto nv = normalize(v);
    return std::clamp(dot(nu, nv), -1.0, 1.0);
}

double cosine_dist(std::span<const double> u, std::span<const double> v) {
    return 1.0 - cosine_sim(u, v);
}

void ObjectiveParams::validate() const {
    if (!(tau > 0.0)) throw InputError("tau must be > 0");
    if (!(margin_m0 > 0.0)) throw InputError("margin_m0 must be > 0");
}

SimilarityLoss contrastive_from_similarities(std::span<const double> positive_sims,
                                             std::span<const double> negative_sims, double tau) {
    if (positive_sims.empty()) throw InputError("contrastive loss needs at least one positive");
    if (!(tau > 0.0)) throw InputError("tau must be > 0");

    double pos_max = -std::numeric_limits<double>::infinity();
    for (double s : positive_sims) pos_max = std::max(pos_max, s / tau);
    double all_max = pos_max;
    for (double s : negative_sims) all_max = std::max(all_max, s / tau);

    // Softmax over the positives alone, and over all candidates, each with its own shift so that
    // neither normalizer underflows.
    SimilarityLoss out;
    std::vector<double> pos_own(positive_sims.size());
    double pos_sum = 0.0;
    for (std::size_t k = 0; k < positive_sims.size(); ++k) {
        pos_own[k] = std::exp(positive_sims[k] / tau - pos_max);
        pos_sum += pos_own[k];
    }
    out.d_positive.resize(positive_sims.size());
    out.d_negative.resize(negative_sims.size());
    double total = 0.0;
    for (std::size_t k = 0; k < positive_sims.size(); ++k) {
        out.d_positive[k] = std::exp(positive_sims[k] / tau - all_max);
        total += out.d_positive[k];
    }
    double neg_sum = 0.0;
    for (std::size_t m = 0; m < negative_sims.size(); ++m) {
        out.d_negative[m] = std::exp(negative_sims[m] / tau - all_max);
        neg_sum += out.d_negative[m];
    }
    total += neg_sum;
    if (all_max == pos_max) {
        // -log(pos/total) = log1p(neg/pos), exact zero when there are no negatives.
        out.value = std::log1p(neg_sum / (total - neg_sum));
    } else {
        out.value = std::log(total) - std::log(pos_sum) + (all_max - pos_max);
    }

    // d/ds_k = (softmax over all - softmax over positives) / tau; d/ds_m = softmax over all / tau.
    for (std::size_t k = 0; k < positive_sims.size(); ++k) {
        out.d_positive[k] = (out.d_positive[k] / total - pos_own[k] / pos_sum) / tau;
    }
    for (auto& g : out.d_negative) g = g / total / tau;
    return out;
}

SimilarityLoss ordinal_from_similarities(std::span<const double> positive_sims,
                                         std::span<const double> negative_sims, double margin_m0) {
    if (positive_sims.empty() || negative_sims.empty()) {
        throw InputError("ordinal loss needs at least one positive and one negative");
    }
    const double k = static_cast<double>(positive_sims.size());
    const double m = static_cast<double>(negative_sims.size());
    double pos_dist = 0.0;
    for (double s : positive_sims) pos_dist += 1.0 - s;
    double neg_dist = 0.0;
    for (double s : negative_sims) neg_dist += 1.0 - s;
    const double hinge = pos_dist / k - neg_dist / m + margin_m0;

    SimilarityLoss out;
    out.value = std::max(0.0, hinge);
    const bool active = hinge > 0.0;
    out.d_positive.assign(positive_sims.size(), active ? -1.0 / k : 0.0);
    out.d_negative.assign(negative_sims.size(), active ? 1.0 / m : 0.0);
    return out;
}

namespace {

std::vector<double> similarities(std::span<const double> anchor, std::span<const std::vector<double>> others) {
    std::vector<double> out;
    out.reserve(others.size());
    for (const auto& v : others) out.push_back(cosine_sim(anchor, v));
    return out;
}

}  // namespace

double contrastive_loss(std::span<const double> anchor, std::span<const std::vector<double>> positives,
                        std::span<const std::vector<double>> negatives, double tau) {
    return contrastive_from_similarities(similarities(anchor, positives), similarities(anchor, negatives), tau).value;
}

double ordinal_loss(std::span<const double> anchor, std::span<const std::vector<double>> positives,
                    std::span<const std::vector<double>> negatives, double margin_m0) {
    if (!(margin_m0 > 0.0)) throw InputError("margin_m0 must be > 0");
    return ordinal_from_similarities(similarities(anchor, positives), similarities(anchor, negatives), margin_m0).value;
}

GateWeights gate(double l_ctr, double l_ord, double t_ctr, double t_ord) {
    GateWeights g;
    g.s_ctr = l_ctr / t_ctr - l_ord / t_ord;
    g.s_ord = -g.s_ctr;
    // softmax(s, -s) = (sigmoid(2s), sigmoid(-2s)); evaluate the smaller weight directly.
    const double e = std::exp(-2.0 * std::abs(g.s_ctr));
    const double small = e / (1.0 + e);
    const double large = 1.0 / (1.0 + e);
    g.w_ctr = g.s_ctr >= 0.0 ? large : small;
    g.w_ord = g.s_ctr >= 0.0 ? small : large;
    return g;
}

double batch_objective(std::span<const PerSampleLosses> samples, double lambda_base, double lambda_ord) {
    if (samples.empty()) throw InputError("batch objective of an empty batch");
    double sum = 0.0;
    for (const auto& s : samples) {
        sum += lambda_base * s.gate.w_ctr * s.l_ctr + lambda_ord * s.gate.w_ord * s.l_ord;
    }
    return sum / static_cast<double>(samples.size());
}

double entropy_reg(std::span<const GateWeights> gates) {
    if (gates.empty()) return 0.0;
    auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
    double sum = 0.0;
    for (const auto& g : gates) sum -= plogp(g.w_ctr) + plogp(g.w_ord);
    return sum / static_cast<double>(gates.size());
}

GateWeights effective_gate(double l_ctr, double l_ord, const Weighting& weighting) {
    if (!weighting.ordinal) return GateWeights{1.0, 0.0, 0.0, 0.0};
    if (!weighting.gating) return GateWeights{};
    return gate(l_ctr, l_ord, weighting.t_ctr, weighting.t_ord);
}

TermPartials term_partials(double l_ctr, double l_ord, const Weighting& w) {
    const GateWeights g = effective_gate(l_ctr, l_ord, w);
    TermPartials p;
    p.ctr_by_lctr = w.lambda_base * g.w_ctr;
    p.ord_by_lord = w.lambda_ord * g.w_ord;
    if (w.ordinal && w.gating && !w.detach_gates) {
        // w_ctr = sigmoid(2 s_ctr): dw_ctr/dl_ctr = 2 w_ctr w_ord / T_ctr, dw_ctr/dl_ord = -2 w_ctr w_ord / T_ord,
        // and dw_ord = -dw_ctr.
        const double spread = 2.0 * g.w_ctr * g.w_ord;
        const double dw_by_lctr = spread / w.t_ctr;
        const double dw_by_lord = -spread / w.t_ord;
        p.ctr_by_lctr += w.lambda_base * l_ctr * dw_by_lctr;
        p.ctr_by_lord = w.lambda_base * l_ctr * dw_by_lord;
        p.ord_by_lctr = -w.lambda_ord * l_ord * dw_by_lctr;
        p.ord_by_lord -= w.lambda_ord * l_ord * dw_by_lord;
    }
    return p;
}

}  // namespace structrep
