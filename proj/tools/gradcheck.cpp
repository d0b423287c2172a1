#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "structrep/error.hpp"
#include "structrep/metagradnorm.hpp"
#include "structrep/random.hpp"

namespace structrep::tools {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::vector<std::size_t> distinct(Rng& rng, std::size_t n, std::size_t count, std::size_t exclude) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != exclude) pool.push_back(i);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

double forward_objective(const GradcheckInstance& in, const Adapter& adapter) {
    const auto losses = batch_losses(adapter, in.base, in.batch, in.params);
    std::vector<PerSampleLosses> samples;
    for (const auto& [c, o] : losses) samples.push_back({c, o, effective_gate(c, o, in.weighting)});
    return batch_objective(samples, in.weighting.lambda_base, in.weighting.lambda_ord);
}

double worst_entry(std::span<const double> analytic, Matrix& params, const GradcheckInstance& in, Adapter& probe) {
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        double& p = params.values()[k];
        const double saved = p;
        p = saved + kGradcheckStep;
        const double up = forward_objective(in, probe);
        p = saved - kGradcheckStep;
        const double down = forward_objective(in, probe);
        p = saved;
        const double fd = (up - down) / (2.0 * kGradcheckStep);
        const double a = analytic[k];
        const double err = std::abs(a - fd) / std::max(kGradcheckFloor, std::abs(fd));
        if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, err);
    }
    return worst;
}

ordered_json matrix_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Matrix matrix_from(const json& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.at(0).size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto values = rows.at(r).get<std::vector<double>>();
        if (values.size() != m.cols()) throw InputError("ragged matrix in gradcheck instance");
        std::copy(values.begin(), values.end(), m.row(r).begin());
    }
    return m;
}

}  // namespace

GradcheckInstance random_instance(const TrainingConfig& config, std::uint64_t seed, int trial) {
    Rng rng = make_rng(seed, "gradcheck", static_cast<std::uint64_t>(trial));
    GradcheckInstance in;
    in.trial = trial;
    const int d = uniform_int(rng, 3, 8);
    const int r = uniform_int(rng, 1, 3);
    const int b = uniform_int(rng, 1, 4);
    const int k = uniform_int(rng, 1, 2);
    const int m = uniform_int(rng, 1, 3);
    const auto n = static_cast<std::size_t>(b + k + m + 2);

    std::normal_distribution<double> normal(0.0, 1.0);
    in.base = Matrix(n, static_cast<std::size_t>(d));
    for (auto& v : in.base.values()) v = normal(rng);
    in.adapter = init_adapter(static_cast<std::size_t>(d), static_cast<std::size_t>(r), config.lora_alpha,
                              seed + static_cast<std::uint64_t>(trial));
    for (auto& v : in.adapter.up.values()) v = 0.3 * normal(rng);

    for (int i = 0; i < b; ++i) {
        BatchMember member;
        member.anchor = static_cast<std::size_t>(i);
        member.ctr_positives = distinct(rng, n, static_cast<std::size_t>(k), member.anchor);
        member.ctr_negatives = distinct(rng, n, static_cast<std::size_t>(m), member.anchor);
        if (config.flags.ordinal) {
            member.ord_positives = distinct(rng, n, static_cast<std::size_t>(k), member.anchor);
            member.ord_negatives = distinct(rng, n, static_cast<std::size_t>(m), member.anchor);
        }
        in.batch.push_back(std::move(member));
    }

    in.params = config.objective_params();
    const MetaParams alpha{uniform(rng, 0.5, 2.0), uniform(rng, 0.5, 3.0), uniform(rng, 0.5, 15.0),
                           uniform(rng, 0.5, 15.0)};
    in.meta = MetaState::from_values(alpha, config.gamma, config.beta, config.eta_meta, config.epsilon);
    in.meta.initial_losses = LossPair{uniform(rng, 0.2, 3.0), uniform(rng, 0.01, 0.3)};
    in.weighting = config.weighting(in.meta);
    in.weighting.detach_gates = false;  // the check is against the full chain rule
    return in;
}

GradcheckOutcome check_instance(const GradcheckInstance& in, bool with_meta) {
    GradcheckOutcome out;
    const BackwardResult analytic = backward(in.adapter, in.base, in.batch, in.params, in.weighting);
    out.finite = std::isfinite(analytic.objective) && analytic.grad.all_finite();

    Adapter probe = in.adapter;
    const double worst_down = worst_entry(analytic.grad.d_down.values(), probe.down, in, probe);
    const double worst_up = worst_entry(analytic.grad.d_up.values(), probe.up, in, probe);
    out.max_rel_error = std::max(worst_down, worst_up);

    if (with_meta) {
        const SampleGradients table = sample_gradients(in.adapter, in.base, in.batch, in.params);
        const MetaStepResult first = meta_step(in.meta, table, in.weighting);
        const MetaStepResult second = meta_step(in.meta, table, in.weighting);
        out.meta_reproducible = first.state == second.state && first.gradient == second.gradient;
        for (double g : first.gradient) out.finite = out.finite && std::isfinite(g);
    }
    return out;
}

std::string instance_to_json(const GradcheckInstance& in, const GradcheckOutcome& outcome) {
    ordered_json doc;
    doc["trial"] = in.trial;
    doc["max_rel_error"] = outcome.max_rel_error;
    doc["meta_reproducible"] = outcome.meta_reproducible;
    doc["finite"] = outcome.finite;
    doc["step"] = kGradcheckStep;
    doc["params"] = {{"tau", in.params.tau}, {"margin_m0", in.params.margin_m0}};
    doc["weighting"] = {{"lambda_base", in.weighting.lambda_base}, {"lambda_ord", in.weighting.lambda_ord},
                        {"t_ctr", in.weighting.t_ctr},             {"t_ord", in.weighting.t_ord},
                        {"ordinal", in.weighting.ordinal},         {"gating", in.weighting.gating},
                        {"detach_gates", in.weighting.detach_gates}};
    doc["meta"] = {{"rho", in.meta.rho}, {"gamma", in.meta.gamma}, {"beta", in.meta.beta},
                   {"eta_meta", in.meta.eta_meta}, {"epsilon", in.meta.epsilon}};
    if (in.meta.initial_losses) doc["meta"]["initial_losses"] = *in.meta.initial_losses;
    doc["adapter"] = {{"scale", in.adapter.scale}, {"down", matrix_json(in.adapter.down)}, {"up", matrix_json(in.adapter.up)}};
    doc["base"] = matrix_json(in.base);
    doc["batch"] = ordered_json::array();
    for (const auto& m : in.batch) {
        doc["batch"].push_back({{"anchor", m.anchor},
                                {"ctr_positives", m.ctr_positives},
                                {"ctr_negatives", m.ctr_negatives},
                                {"ord_positives", m.ord_positives},
                                {"ord_negatives", m.ord_negatives}});
    }
    return doc.dump(2) + "\n";
}

GradcheckInstance instance_from_json(const std::string& text) {
    try {
        const auto doc = json::parse(text);
        GradcheckInstance in;
        in.trial = doc.at("trial").get<int>();
        in.params.tau = doc.at("params").at("tau").get<double>();
        in.params.margin_m0 = doc.at("params").at("margin_m0").get<double>();
        const auto& w = doc.at("weighting");
        in.weighting.lambda_base = w.at("lambda_base").get<double>();
        in.weighting.lambda_ord = w.at("lambda_ord").get<double>();
        in.weighting.t_ctr = w.at("t_ctr").get<double>();
        in.weighting.t_ord = w.at("t_ord").get<double>();
        in.weighting.ordinal = w.at("ordinal").get<bool>();
        in.weighting.gating = w.at("gating").get<bool>();
        in.weighting.detach_gates = w.at("detach_gates").get<bool>();
        const auto& meta = doc.at("meta");
        in.meta.rho = meta.at("rho").get<std::array<double, 4>>();
        in.meta.gamma = meta.at("gamma").get<double>();
        in.meta.beta = meta.at("beta").get<double>();
        in.meta.eta_meta = meta.at("eta_meta").get<double>();
        in.meta.epsilon = meta.at("epsilon").get<double>();
        if (meta.contains("initial_losses")) in.meta.initial_losses = meta.at("initial_losses").get<LossPair>();
        in.adapter.scale = doc.at("adapter").at("scale").get<double>();
        in.adapter.down = matrix_from(doc.at("adapter").at("down"));
        in.adapter.up = matrix_from(doc.at("adapter").at("up"));
        in.base = matrix_from(doc.at("base"));
        for (const auto& m : doc.at("batch")) {
            BatchMember member;
            member.anchor = m.at("anchor").get<std::size_t>();
            member.ctr_positives = m.at("ctr_positives").get<std::vector<std::size_t>>();
            member.ctr_negatives = m.at("ctr_negatives").get<std::vector<std::size_t>>();
            member.ord_positives = m.at("ord_positives").get<std::vector<std::size_t>>();
            member.ord_negatives = m.at("ord_negatives").get<std::vector<std::size_t>>();
            in.batch.push_back(std::move(member));
        }
        return in;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed gradcheck instance: ") + e.what());
    }
}

}  // namespace structrep::tools
