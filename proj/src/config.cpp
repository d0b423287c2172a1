#include "structrep/config.hpp"

#include <array>

#include "json.hpp"
#include "structrep/error.hpp"
#include "structrep/io.hpp"

namespace structrep {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 5> kLadder{"contrastive_only", "add_ordinal", "add_gating", "add_lambdas",
                                                  "add_metagradnorm"};

}  // namespace

FeatureFlags FeatureFlags::parse(const std::vector<std::string>& names) {
    std::array<bool, kLadder.size()> rungs{};
    FeatureFlags f;
    for (const auto& name : names) {
        bool known = false;
        for (std::size_t i = 0; i < kLadder.size(); ++i) {
            if (name == kLadder[i]) {
                rungs[i] = true;
                known = true;
            }
        }
        if (name == "gate_stop_gradient") {
            f.gate_stop_gradient = true;
            known = true;
        } else if (name == "stage2_reinit") {
            f.stage2_reinit = true;
            known = true;
        }
        if (!known) throw InputError("unknown feature flag '" + name + "'");
    }
    for (std::size_t i = 1; i < rungs.size(); ++i) {
        if (rungs[i] && !rungs[i - 1]) {
            throw InputError("feature flag '" + std::string(kLadder[i]) + "' requires '" + std::string(kLadder[i - 1]) +
                             "'");
        }
    }
    f.contrastive = rungs[0];
    f.ordinal = rungs[1];
    f.gating = rungs[2];
    f.lambdas = rungs[3];
    f.metagradnorm = rungs[4];
    return f;
}

FeatureFlags FeatureFlags::all() {
    FeatureFlags f;
    f.contrastive = f.ordinal = f.gating = f.lambdas = f.metagradnorm = true;
    return f;
}

std::vector<std::string> FeatureFlags::names() const {
    std::vector<std::string> out;
    const std::array<bool, kLadder.size()> rungs{contrastive, ordinal, gating, lambdas, metagradnorm};
    for (std::size_t i = 0; i < rungs.size(); ++i) {
        if (rungs[i]) out.emplace_back(kLadder[i]);
    }
    if (gate_stop_gradient) out.emplace_back("gate_stop_gradient");
    if (stage2_reinit) out.emplace_back("stage2_reinit");
    return out;
}

void TrainingConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InputError(std::string("invalid configuration: ") + what);
    };
    require(batch_size >= 1, "batch_size must be >= 1");
    require(k_max >= 1 && m_max >= 1, "k_max and m_max must be >= 1");
    require(tau > 0.0, "tau must be > 0");
    require(margin_m0 > 0.0, "margin_m0 must be > 0");
    require(t_ctr > 0.0 && t_ord > 0.0, "temperatures must be > 0");
    require(lambda_base > 0.0 && lambda_ord > 0.0, "lambdas must be > 0");
    require(gamma > 0.0, "gamma must be > 0");
    require(beta >= 0.0, "beta must be >= 0");
    require(eta_theta > 0.0 && eta_ft > 0.0, "learning rates must be > 0");
    require(eta_meta >= 0.0, "eta_meta must be >= 0");
    require(stage1_epochs >= 0 && stage2_epochs >= 0, "epoch counts must be >= 0");
    require(patience >= 1, "patience must be >= 1");
    require(rank >= 1, "rank must be >= 1");
    require(lora_alpha >= 0.0, "lora_alpha must be >= 0");
    require(fold_spec.n_folds >= 1 && fold_spec.unseen_per_fold >= 1, "fold_spec counts must be >= 1");
    require(fold_spec.test_fraction > 0.0 && fold_spec.test_fraction < 1.0, "fold_spec.test_fraction must lie in (0,1)");
    require(epsilon > 0.0, "epsilon must be > 0");
    require(meta_interval >= 1, "meta_interval must be >= 1");
    require(validation_fraction >= 0.0 && validation_fraction < 1.0, "validation_fraction must lie in [0,1)");
    require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0,1)");
}

MetaState TrainingConfig::initial_meta() const {
    return MetaState::from_values(MetaParams{lambda_base, lambda_ord, t_ctr, t_ord}, gamma, beta, eta_meta, epsilon);
}

Weighting TrainingConfig::weighting(const MetaState& meta) const {
    const MetaParams p = meta.materialized();
    Weighting w;
    w.ordinal = flags.ordinal;
    w.gating = flags.gating;
    w.detach_gates = flags.gate_stop_gradient;
    w.t_ctr = p.t_ctr;
    w.t_ord = p.t_ord;
    if (flags.lambdas) {
        w.lambda_base = p.lambda_base;
        w.lambda_ord = p.lambda_ord;
    }
    return w;
}

namespace {

template <typename T>
void read(const json& doc, const char* key, T& out) {
    if (auto it = doc.find(key); it != doc.end()) out = it->get<T>();
}

void apply_document(TrainingConfig& c, const json& doc) {
    static const std::array<std::string_view, 23> keys{
        "seed",        "granularity", "batch_size",   "k_max",          "m_max",         "tau",
        "margin_m0",   "t_ctr",       "t_ord",        "lambda_base",    "lambda_ord",    "gamma",
        "beta",        "eta_theta",   "eta_ft",       "eta_meta",       "stage1_epochs", "stage2_epochs",
        "patience",    "rank",        "lora_alpha",   "flags",          "fold_spec"};
    if (!doc.is_object()) throw InputError("configuration must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
            throw InputError("unknown configuration key '" + it.key() + "'");
        }
    }
    try {
        read(doc, "seed", c.seed);
        if (auto it = doc.find("granularity"); it != doc.end()) c.granularity = parse_granularity(it->get<std::string>());
        read(doc, "batch_size", c.batch_size);
        read(doc, "k_max", c.k_max);
        read(doc, "m_max", c.m_max);
        read(doc, "tau", c.tau);
        read(doc, "margin_m0", c.margin_m0);
        read(doc, "t_ctr", c.t_ctr);
        read(doc, "t_ord", c.t_ord);
        read(doc, "lambda_base", c.lambda_base);
        read(doc, "lambda_ord", c.lambda_ord);
        read(doc, "gamma", c.gamma);
        read(doc, "beta", c.beta);
        read(doc, "eta_theta", c.eta_theta);
        read(doc, "eta_ft", c.eta_ft);
        read(doc, "eta_meta", c.eta_meta);
        read(doc, "stage1_epochs", c.stage1_epochs);
        read(doc, "stage2_epochs", c.stage2_epochs);
        read(doc, "patience", c.patience);
        read(doc, "rank", c.rank);
        read(doc, "lora_alpha", c.lora_alpha);
        if (auto it = doc.find("flags"); it != doc.end()) {
            c.flags = FeatureFlags::parse(it->get<std::vector<std::string>>());
        }
        if (auto it = doc.find("fold_spec"); it != doc.end()) {
            if (!it->is_object()) throw InputError("fold_spec must be an object");
            for (auto f = it->begin(); f != it->end(); ++f) {
                if (f.key() != "n_folds" && f.key() != "unseen_per_fold" && f.key() != "test_fraction") {
                    throw InputError("unknown fold_spec key '" + f.key() + "'");
                }
            }
            read(*it, "n_folds", c.fold_spec.n_folds);
            read(*it, "unseen_per_fold", c.fold_spec.unseen_per_fold);
            read(*it, "test_fraction", c.fold_spec.test_fraction);
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid configuration value: ") + e.what());
    }
    c.validate();
}

}  // namespace

TrainingConfig parse_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed configuration: ") + e.what());
    }
    TrainingConfig c;
    apply_document(c, doc);
    return c;
}

TrainingConfig load_config(const std::filesystem::path& path) {
    try {
        return parse_config(read_text_file(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

std::string serialize_config(const TrainingConfig& c) {
    ordered_json doc;
    doc["seed"] = c.seed;
    doc["granularity"] = std::string(to_string(c.granularity));
    doc["batch_size"] = c.batch_size;
    doc["k_max"] = c.k_max;
    doc["m_max"] = c.m_max;
    doc["tau"] = c.tau;
    doc["margin_m0"] = c.margin_m0;
    doc["t_ctr"] = c.t_ctr;
    doc["t_ord"] = c.t_ord;
    doc["lambda_base"] = c.lambda_base;
    doc["lambda_ord"] = c.lambda_ord;
    doc["gamma"] = c.gamma;
    doc["beta"] = c.beta;
    doc["eta_theta"] = c.eta_theta;
    doc["eta_ft"] = c.eta_ft;
    doc["eta_meta"] = c.eta_meta;
    doc["stage1_epochs"] = c.stage1_epochs;
    doc["stage2_epochs"] = c.stage2_epochs;
    doc["patience"] = c.patience;
    doc["rank"] = c.rank;
    doc["lora_alpha"] = c.lora_alpha;
    doc["flags"] = c.flags.names();
    doc["fold_spec"] = {{"n_folds", c.fold_spec.n_folds},
                        {"unseen_per_fold", c.fold_spec.unseen_per_fold},
                        {"test_fraction", c.fold_spec.test_fraction}};
    return doc.dump(2) + "\n";
}

void apply_override(TrainingConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw InputError("override must have the form key=value: '" + std::string(assignment) + "'");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json doc = json::parse(serialize_config(config));
    if (key.rfind("fold_spec.", 0) == 0) {
        doc["fold_spec"][key.substr(10)] = value;
    } else {
        doc[key] = value;
    }
    TrainingConfig updated = config;
    apply_document(updated, doc);
    config = updated;
}

}  // namespace structrep
