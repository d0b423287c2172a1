#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "structrep/corpus.hpp"
#include "structrep/metagradnorm.hpp"
#include "structrep/objectives.hpp"

namespace structrep {

/// The feature ladder: contrastive_only < add_ordinal < add_gating < add_lambdas <
/// add_metagradnorm. Each rung requires every earlier one. Two further switches sit outside the
/// ladder: gate_stop_gradient (detach gates when differentiating) and stage2_reinit (start
/// stage 2 from a fresh adapter).
struct FeatureFlags {
    bool contrastive = false;
    bool ordinal = false;
    bool gating = false;
    bool lambdas = false;
    bool metagradnorm = false;
    bool gate_stop_gradient = false;
    bool stage2_reinit = false;

    static FeatureFlags parse(const std::vector<std::string>& names);
    static FeatureFlags all();
    std::vector<std::string> names() const;
    bool stage1_enabled() const noexcept { return contrastive; }

    bool operator==(const FeatureFlags&) const = default;
};

struct FoldSpec {
    int n_folds = 3;
    int unseen_per_fold = 2;
    double test_fraction = 0.2;

    bool operator==(const FoldSpec&) const = default;
};

/// Run configuration. The values of the first block round-trip through the configuration file;
/// the second block is fixed per build of a run.
struct TrainingConfig {
    std::uint64_t seed = 155;
    Granularity granularity = Granularity::Aspect;
    int batch_size = 5;
    int k_max = 3;
    int m_max = 6;
    double tau = 0.07;
    double margin_m0 = 0.05;
    double t_ctr = 13.0;
    double t_ord = 1.0;
    double lambda_base = 1.0;
    double lambda_ord = 2.5;
    double gamma = 0.5;
    double beta = 0.01;
    double eta_theta = 1e-4;
    double eta_ft = 3e-5;
    double eta_meta = 1e-3;
    int stage1_epochs = 2;
    int stage2_epochs = 6;
    int patience = 3;
    int rank = 8;
    double lora_alpha = 16.0;
    FeatureFlags flags = FeatureFlags::all();
    FoldSpec fold_spec;

    double epsilon = 1e-8;
    int meta_interval = 1;
    double validation_fraction = 0.1;
    double threshold = 0.5;

    void validate() const;

    ObjectiveParams objective_params() const { return {tau, margin_m0}; }
    /// Meta-state seeded from the configured lambdas and temperatures.
    MetaState initial_meta() const;
    /// Weighting for the current meta-parameters under the feature flags: lambdas are (1, 1)
    /// until add_lambdas, temperatures only matter from add_gating on.
    Weighting weighting(const MetaState& meta) const;

    bool operator==(const TrainingConfig&) const = default;
};

/// Parses a configuration document. Only the documented keys are accepted; absent keys keep
/// their defaults. Throws InputError on unknown keys, wrong types or invalid values.
TrainingConfig parse_config(std::string_view json_text);
TrainingConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const TrainingConfig& config);

/// Applies one `key=value` override; the value is read as JSON when possible, else as a string.
void apply_override(TrainingConfig& config, std::string_view assignment);

}  // namespace structrep
