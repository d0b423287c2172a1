#include "structrep/metagradnorm.hpp"

#include <cmath>

#include "structrep/error.hpp"

namespace structrep {

double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double v) {
    if (!(v > 0.0)) throw InputError("softplus pre-image needs a positive value");
    // log(e^v - 1), written to stay accurate for both small and large v.
    return v > 20.0 ? v + std::log1p(-std::exp(-v)) : std::log(std::expm1(v));
}

MetaState MetaState::from_values(const MetaParams& init, double gamma, double beta, double eta_meta,
                                 double epsilon) {
    if (!(gamma > 0.0)) throw InputError("gamma must be > 0");
    if (!(beta >= 0.0)) throw InputError("beta must be >= 0");
    if (!(eta_meta >= 0.0)) throw InputError("eta_meta must be >= 0");
    if (!(epsilon > 0.0)) throw InputError("epsilon must be > 0");
    MetaState s;
    s.rho = {softplus_inverse(init.lambda_base), softplus_inverse(init.lambda_ord), softplus_inverse(init.t_ctr),
             softplus_inverse(init.t_ord)};
    s.gamma = gamma;
    s.beta = beta;
    s.eta_meta = eta_meta;
    s.epsilon = epsilon;
    return s;
}

MetaParams MetaState::materialized() const {
    return MetaParams{softplus(rho[0]), softplus(rho[1]), softplus(rho[2]), softplus(rho[3])};
}

Weighting apply_meta(const Weighting& flags, const MetaParams& params) {
    Weighting w = flags;
    w.lambda_base = params.lambda_base;
    w.lambda_ord = params.lambda_ord;
    w.t_ctr = params.t_ctr;
    w.t_ord = params.t_ord;
    return w;
}

LossPair difficulty_ratios(const LossPair& current, const LossPair& initial, double gamma, double epsilon) {
    const LossPair normalized{current[0] / (initial[0] + epsilon), current[1] / (initial[1] + epsilon)};
    const double mean = 0.5 * (normalized[0] + normalized[1]);
    if (!(mean > 0.0)) return {1.0, 1.0};
    return {std::pow(normalized[0] / mean, gamma), std::pow(normalized[1] / mean, gamma)};
}

Targets targets(const LossPair& grad_norms, const LossPair& ratios) {
    Targets t;
    t.mean = 0.5 * (grad_norms[0] + grad_norms[1]);
    t.target = {t.mean * ratios[0], t.mean * ratios[1]};
    return t;
}

double meta_objective(const LossPair& grad_norms, const LossPair& target, double beta,
                      std::span<const GateWeights> gates) {
    double j = std::abs(grad_norms[0] - target[0]) + std::abs(grad_norms[1] - target[1]);
    if (beta != 0.0) j += beta * entropy_reg(gates);
    return j;
}

LossPair grad_norms(const SampleGradients& table, const Weighting& weighting) {
    return {combine(table, weighting, Term::Contrastive).grad.norm(),
            combine(table, weighting, Term::Ordinal).grad.norm()};
}

LossPair grad_norms(const Adapter& adapter, const Matrix& base, const Batch& batch, const ObjectiveParams& params,
                    const Weighting& weighting) {
    if (batch.empty()) throw InputError("grad_norms on an empty batch");
    return grad_norms(sample_gradients(adapter, base, batch, params), weighting);
}

namespace {

LossPair mean_losses(const SampleGradients& table) {
    LossPair sum{0.0, 0.0};
    for (std::size_t i = 0; i < table.size(); ++i) {
        sum[0] += table.l_ctr[i];
        sum[1] += table.l_ord[i];
    }
    const double n = static_cast<double>(table.size());
    return {sum[0] / n, sum[1] / n};
}

// Everything the meta objective needs at one meta-parameter point. The ratios depend only on the
// unweighted losses, so they are shared by every probe.
GradNormSnapshot evaluate(const MetaParams& params, const SampleGradients& table, const Weighting& flags,
                          const LossPair& normalized, const LossPair& ratios, double beta) {
    const Weighting w = apply_meta(flags, params);
    const BackwardResult ctr = combine(table, w, Term::Contrastive);
    const BackwardResult ord = combine(table, w, Term::Ordinal);

    GradNormSnapshot snap;
    snap.grad_norms = {ctr.grad.norm(), ord.grad.norm()};
    snap.normalized_losses = normalized;
    snap.ratios = ratios;
    const Targets t = targets(snap.grad_norms, ratios);
    snap.mean_norm = t.mean;
    snap.target = t.target;
    std::vector<GateWeights> gates;
    gates.reserve(ctr.samples.size());
    for (const auto& s : ctr.samples) gates.push_back(s.gate);
    snap.objective = meta_objective(snap.grad_norms, snap.target, beta, gates);
    return snap;
}

MetaParams params_from(const std::array<double, 4>& rho) {
    return MetaParams{softplus(rho[0]), softplus(rho[1]), softplus(rho[2]), softplus(rho[3])};
}

}  // namespace

GradNormSnapshot snapshot(const MetaState& meta, const SampleGradients& table, const Weighting& flags) {
    if (!meta.initial_losses) throw InputError("initial losses must be recorded before GradNorm quantities");
    if (table.size() == 0) throw InputError("empty batch");
    const LossPair now = mean_losses(table);
    const LossPair& l0 = *meta.initial_losses;
    const LossPair normalized{now[0] / (l0[0] + meta.epsilon), now[1] / (l0[1] + meta.epsilon)};
    const LossPair ratios = difficulty_ratios(now, l0, meta.gamma, meta.epsilon);
    return evaluate(meta.materialized(), table, flags, normalized, ratios, meta.beta);
}

MetaStepResult meta_step(const MetaState& meta, const SampleGradients& table, const Weighting& flags) {
    MetaStepResult out;
    out.before = snapshot(meta, table, flags);
    out.state = meta;
    if (!std::isfinite(out.before.objective)) throw NumericalError("non-finite meta objective");

    const LossPair& normalized = out.before.normalized_losses;
    const LossPair& ratios = out.before.ratios;
    for (std::size_t j = 0; j < meta.rho.size(); ++j) {
        const double h = 1e-4 * std::max(1.0, std::abs(meta.rho[j]));
        auto plus = meta.rho;
        auto minus = meta.rho;
        plus[j] += h;
        minus[j] -= h;
        const double j_plus = evaluate(params_from(plus), table, flags, normalized, ratios, meta.beta).objective;
        const double j_minus = evaluate(params_from(minus), table, flags, normalized, ratios, meta.beta).objective;
        if (!std::isfinite(j_plus) || !std::isfinite(j_minus)) {
            throw NumericalError("non-finite meta objective at probe " + std::to_string(j));
        }
        out.gradient[j] = (j_plus - j_minus) / (2.0 * h);
    }
    if (meta.eta_meta == 0.0) return out;
    for (std::size_t j = 0; j < meta.rho.size(); ++j) {
        out.state.rho[j] = std::max(kMinPreimage, meta.rho[j] - meta.eta_meta * out.gradient[j]);
    }
    return out;
}

MetaStepResult meta_step(const MetaState& meta, const Adapter& adapter, const Matrix& base, const Batch& batch,
                         const ObjectiveParams& params, const Weighting& flags) {
    if (batch.empty()) throw InputError("meta_step on an empty batch");
    return meta_step(meta, sample_gradients(adapter, base, batch, params), flags);
}

}  // namespace structrep
