#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "structrep/checkpoint.hpp"
#include "structrep/config.hpp"
#include "structrep/corpus.hpp"
#include "structrep/error.hpp"
#include "structrep/eval.hpp"
#include "structrep/io.hpp"
#include "structrep/pairing.hpp"
#include "structrep/trainer.hpp"

namespace structrep::tools {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct CommonRun {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonRun& c) {
    cmd->add_option("--config", c.config_path, "Run configuration file (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "Override one configuration key: key=value");
    cmd->add_option("--seed", c.seed, "Run seed (overrides the configuration)");
}

TrainingConfig resolve_config(const CommonRun& c) {
    TrainingConfig config = c.config_path.empty() ? TrainingConfig{} : load_config(c.config_path);
    for (const auto& o : c.overrides) apply_override(config, o);
    if (c.seed) config.seed = *c.seed;
    config.validate();
    return config;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

// synth

struct SynthArgs {
    SyntheticSpec spec;
    std::uint64_t seed = 155;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    const Corpus corpus = generate_synthetic(a.spec, a.seed);
    fs::create_directories(a.out);
    save_corpus(corpus, fs::path(a.out) / "corpus.ndjson");
    save_taxonomy(corpus.taxonomy, fs::path(a.out) / "taxonomy.json");
    std::cerr << "wrote " << corpus.claims.size() << " claims over " << corpus.taxonomy.categories().size()
              << " categories to " << a.out << "\n";
    return kExitOk;
}

// pairs

struct PairsArgs {
    std::string corpus;
    std::string taxonomy;
    std::string granularity = "aspect";
    std::string out;
    unsigned threads = 1;
};

int cmd_pairs(const PairsArgs& a) {
    const Granularity g = parse_granularity(a.granularity);
    const Corpus corpus = load_corpus(a.corpus, a.taxonomy);
    const PairCache cache = build_pair_cache(corpus, g, a.threads);
    save_pair_cache(cache, corpus, a.out);
    std::cerr << "wrote pair sets of " << corpus.claims.size() << " anchors to " << a.out << "\n";
    return kExitOk;
}

// gradcheck

struct GradcheckArgs {
    CommonRun common;
    int trials = 20;
    std::string worst = "gradcheck_worst.json";
    std::string replay;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    const TrainingConfig config = resolve_config(a.common);
    std::vector<GradcheckInstance> instances;
    if (!a.replay.empty()) {
        instances.push_back(instance_from_json(read_text_file(a.replay)));
    } else {
        if (a.trials < 1) throw InputError("--trials must be >= 1: nothing to check");
        for (int t = 0; t < a.trials; ++t) instances.push_back(random_instance(config, config.seed, t));
    }
    const bool with_meta = config.flags.metagradnorm;

    std::fprintf(stderr, "%-6s %-3s %-3s %-3s %-14s %-10s %s\n", "trial", "d", "r", "B", "max_rel_err", "meta", "status");
    bool all_ok = true;
    double worst_err = -1.0;
    std::optional<std::pair<GradcheckInstance, GradcheckOutcome>> worst;
    for (const auto& in : instances) {
        const GradcheckOutcome out = check_instance(in, with_meta);
        const bool ok = out.finite && out.meta_reproducible && out.max_rel_error < kGradcheckTolerance;
        all_ok = all_ok && ok;
        std::fprintf(stderr, "%-6d %-3zu %-3zu %-3zu %-14.3e %-10s %s\n", in.trial, in.adapter.dim(), in.adapter.rank(),
                     in.batch.size(), out.max_rel_error,
                     with_meta ? (out.meta_reproducible ? "repro" : "DIFFERS") : "skipped", ok ? "pass" : "FAIL");
        const double score = ok ? out.max_rel_error : std::numeric_limits<double>::infinity();
        if (score > worst_err || !worst) {
            worst_err = score;
            worst = std::make_pair(in, out);
        }
    }
    if (!all_ok) {
        write_text_file(a.worst, instance_to_json(worst->first, worst->second));
        std::cerr << "gradcheck FAILED; worst instance written to " << a.worst << "\n";
        return kExitRuntime;
    }
    std::cerr << "gradcheck passed: " << instances.size() << " instance(s), tolerance " << kGradcheckTolerance << "\n";
    return kExitOk;
}

// train

struct TrainArgs {
    CommonRun common;
    std::string corpus;
    std::string taxonomy;
    std::optional<int> fold;
    bool full = false;
    std::string out;
};

FoldSplit select_fold(const TrainingConfig& config, const Corpus& corpus, std::optional<int> fold_index) {
    if (!fold_index) return make_full_split(corpus, config.fold_spec.test_fraction, config.seed);
    const auto folds = make_folds(corpus, config.fold_spec.n_folds, config.fold_spec.unseen_per_fold,
                                  config.fold_spec.test_fraction, config.seed);
    if (*fold_index < 0 || *fold_index >= static_cast<int>(folds.size())) {
        throw InputError("fold index " + std::to_string(*fold_index) + " out of range [0, " +
                         std::to_string(folds.size()) + ")");
    }
    return folds[static_cast<std::size_t>(*fold_index)];
}

int cmd_train(const TrainArgs& a) {
    if (a.full == a.fold.has_value()) throw InputError("exactly one of --fold K or --full is required");
    const TrainingConfig config = resolve_config(a.common);
    const Corpus corpus = load_corpus(a.corpus, a.taxonomy);
    const FoldSplit fold = select_fold(config, corpus, a.fold);

    FoldRun run = run_fold(config, corpus, fold);

    const fs::path out(a.out);
    fs::create_directories(out);
    Checkpoint ckpt;
    ckpt.fold_id = fold.fold_id;
    ckpt.adapter = run.adapter;
    ckpt.head = run.head;
    if (config.flags.stage1_enabled()) ckpt.meta = run.meta;
    checkpoint_save(ckpt, out / "checkpoint.bin");
    run.log.checkpoints.push_back("checkpoint.bin");
    write_text_file(out / "runlog.ndjson", run.log.to_ndjson());
    save_fold(fold, out / "fold.json");
    write_text_file(out / "config.json", serialize_config(config));

    ordered_json report;
    report["fold_id"] = fold.fold_id;
    report["seen_f1"] = round6(run.seen_f1);
    report["unseen_f1"] = fold.fold_id == kFullSplitId ? ordered_json(nullptr) : ordered_json(round6(run.unseen_f1));
    report["flags"] = config.flags.names();
    write_text_file(out / "fold_report.json", report.dump(2) + "\n");

    if (fold.fold_id == kFullSplitId) {
        std::fprintf(stderr, "full split: test F1 %.4f\n", run.seen_f1);
    } else {
        std::fprintf(stderr, "fold %d: seen F1 %.4f, unseen F1 %.4f\n", fold.fold_id, run.seen_f1, run.unseen_f1);
    }
    return kExitOk;
}

// eval

struct EvalArgs {
    CommonRun common;
    std::vector<std::string> checkpoints;
    std::string corpus;
    std::string taxonomy;
    std::vector<std::string> folds;
    std::string out;
    std::string csv;
    bool clustering = false;
    bool print_report = false;
};

int cmd_eval(const EvalArgs& a) {
    if (a.out.empty() && !a.print_report) throw InputError("one of --out or --print-report is required");
    const TrainingConfig config = resolve_config(a.common);
    const Corpus corpus = load_corpus(a.corpus, a.taxonomy);

    std::vector<FoldSplit> splits;
    for (const auto& f : a.folds) splits.push_back(load_fold(f));
    if (a.folds.empty()) {
        splits = make_folds(corpus, config.fold_spec.n_folds, config.fold_spec.unseen_per_fold,
                            config.fold_spec.test_fraction, config.seed);
        splits.push_back(make_full_split(corpus, config.fold_spec.test_fraction, config.seed));
    }
    auto split_for = [&](int fold_id) -> const FoldSplit& {
        for (const auto& s : splits) {
            if (s.fold_id == fold_id) return s;
        }
        throw InputError("no fold split with id " + std::to_string(fold_id));
    };

    std::vector<FoldScore> scores;
    std::optional<double> full_f1;
    std::vector<ClusteringStats> clustering;
    for (const auto& path : a.checkpoints) {
        const Checkpoint c = checkpoint_load(path);
        if (c.adapter.dim() != corpus.dim) {
            throw InputError(path + ": checkpoint dimension mismatch: d=" + std::to_string(c.adapter.dim()) +
                             ", corpus d=" + std::to_string(corpus.dim));
        }
        if (!c.head) throw InputError(path + ": checkpoint has no task head");
        if (c.head->categories != corpus.taxonomy.categories()) {
            throw InputError(path + ": checkpoint categories do not match the taxonomy");
        }
        const FoldSplit& split = split_for(c.fold_id);
        if (c.fold_id == kFullSplitId) {
            full_f1 = split_f1(c.adapter, *c.head, corpus, split.seen_test_ids, config.threshold);
            continue;
        }
        scores.push_back({c.fold_id, split_f1(c.adapter, *c.head, corpus, split.seen_test_ids, config.threshold),
                          split_f1(c.adapter, *c.head, corpus, split.unseen_test_ids, config.threshold)});
        if (a.clustering) {
            const Corpus train = corpus.subset(split.train_ids);
            const auto labels = cluster_labels(train);
            const std::string name = "fold_" + std::to_string(c.fold_id);
            clustering.push_back(clustering_stats(name + "_adapted", adapted_embeddings(c.adapter, train), labels));
            clustering.push_back(clustering_stats(name + "_frozen", embedding_table(train), labels));
        }
    }
    EvalReport report = seen_unseen_report(scores, config.fold_spec.n_folds, full_f1);
    report.clustering_computed = a.clustering;
    report.clustering = std::move(clustering);

    const std::string text = emit_report(report);
    if (!a.out.empty()) write_text_file(a.out, text);
    if (!a.csv.empty()) {
        write_text_file(a.csv, report_csv_header(config.fold_spec.n_folds) + report_csv_row("model", report));
    }
    if (a.print_report) std::cout << text;
    std::fprintf(stderr, "S Avg %.4f, US Avg %.4f, delta %.4f\n", report.s_avg, report.us_avg,
                 report.us_avg - report.s_avg);
    return kExitOk;
}

// grid

struct GridArgs {
    std::vector<std::string> configs;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string corpus;
    std::string taxonomy;
    std::string out;
    bool full = false;
};

int cmd_grid(const GridArgs& a) {
    const Corpus corpus = load_corpus(a.corpus, a.taxonomy);
    std::vector<std::pair<std::string, TrainingConfig>> runs;
    for (const auto& path : a.configs) {
        CommonRun c{path, a.overrides, a.seed};
        runs.emplace_back(fs::path(path).stem().string(), resolve_config(c));
    }
    const int n_folds = runs.front().second.fold_spec.n_folds;
    std::string csv = report_csv_header(n_folds);
    for (const auto& [name, config] : runs) {
        if (config.fold_spec.n_folds != n_folds) throw InputError(name + ": every grid entry needs the same n_folds");
        const auto folds = make_folds(corpus, config.fold_spec.n_folds, config.fold_spec.unseen_per_fold,
                                      config.fold_spec.test_fraction, config.seed);
        std::vector<FoldScore> scores;
        for (const auto& fold : folds) {
            const FoldRun run = run_fold(config, corpus, fold);
            scores.push_back({fold.fold_id, run.seen_f1, run.unseen_f1});
            std::fprintf(stderr, "%s fold %d: seen %.4f unseen %.4f\n", name.c_str(), fold.fold_id, run.seen_f1,
                         run.unseen_f1);
        }
        std::optional<double> full_f1;
        if (a.full) {
            const FoldSplit full = make_full_split(corpus, config.fold_spec.test_fraction, config.seed);
            full_f1 = run_fold(config, corpus, full).seen_f1;
        }
        const EvalReport report = seen_unseen_report(scores, n_folds, full_f1);
        csv += report_csv_row(name, report);
    }
    write_text_file(a.out, csv);
    std::cerr << "wrote " << runs.size() << " grid rows to " << a.out << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Structured representation learning over frozen claim embeddings"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic corpus and taxonomy");
    s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--n-categories", synth.spec.n_categories)->capture_default_str();
    s->add_option("--aspects-per-category", synth.spec.aspects_per_category)->capture_default_str();
    s->add_option("--n-claims", synth.spec.n_claims)->capture_default_str();
    s->add_option("--dim", synth.spec.dim)->capture_default_str();
    s->add_option("--noise", synth.spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
    s->add_option("--ordinal-step", synth.spec.ordinal_step)->capture_default_str();
    s->add_option("--dual-fraction", synth.spec.dual_fraction)->capture_default_str();
    s->add_option("--unlabeled-fraction", synth.spec.unlabeled_fraction)->capture_default_str();

    PairsArgs pairs;
    auto* p = app.add_subcommand("pairs", "Dump contrastive and ordinal pair sets");
    p->add_option("--corpus", pairs.corpus)->required()->check(CLI::ExistingFile);
    p->add_option("--taxonomy", pairs.taxonomy)->required()->check(CLI::ExistingFile);
    p->add_option("--granularity", pairs.granularity, "aspect | category")->capture_default_str();
    p->add_option("--out", pairs.out)->required();
    p->add_option("--threads", pairs.threads)->capture_default_str()->check(CLI::PositiveNumber);

    GradcheckArgs grad;
    auto* g = app.add_subcommand("gradcheck", "Finite-difference checks of the analytic gradients");
    add_common(g, grad.common);
    g->add_option("--trials", grad.trials)->capture_default_str();
    g->add_option("--worst", grad.worst, "Where to write the worst failing instance")->capture_default_str();
    g->add_option("--replay", grad.replay, "Re-check a previously written instance")->check(CLI::ExistingFile);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Run both training stages on one fold or the full split");
    add_common(t, train.common);
    t->add_option("--corpus", train.corpus)->required()->check(CLI::ExistingFile);
    t->add_option("--taxonomy", train.taxonomy)->required()->check(CLI::ExistingFile);
    t->add_option("--fold", train.fold, "Cross-category fold index");
    t->add_flag("--full", train.full, "Standard split of the whole corpus");
    t->add_option("--out", train.out, "Output directory")->required();

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Seen/unseen F1 and clustering statistics of trained checkpoints");
    add_common(e, eval.common);
    e->add_option("--checkpoint", eval.checkpoints, "Checkpoint file (repeatable)")->required();
    e->add_option("--corpus", eval.corpus)->required()->check(CLI::ExistingFile);
    e->add_option("--taxonomy", eval.taxonomy)->required()->check(CLI::ExistingFile);
    e->add_option("--folds", eval.folds, "Fold split files (default: regenerate from the configuration)");
    e->add_option("--out", eval.out, "Report file");
    e->add_option("--csv", eval.csv, "Table row file");
    e->add_flag("--clustering", eval.clustering, "Add representation-geometry statistics");
    e->add_flag("--print-report", eval.print_report, "Also write the report to standard output");

    GridArgs grid;
    auto* r = app.add_subcommand("grid", "Cross-category evaluation of several configurations");
    r->add_option("--config", grid.configs, "Configuration files (repeatable)")->required()->check(CLI::ExistingFile);
    r->add_option("--set", grid.overrides, "Override applied to every configuration");
    r->add_option("--seed", grid.seed);
    r->add_option("--corpus", grid.corpus)->required()->check(CLI::ExistingFile);
    r->add_option("--taxonomy", grid.taxonomy)->required()->check(CLI::ExistingFile);
    r->add_option("--out", grid.out, "CSV output")->required();
    r->add_flag("--full", grid.full, "Also train on the full split");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) {
            app.exit(err);
            return kExitOk;
        }
        std::cerr << "error: " << err.what() << "\n";
        return kExitInput;
    }

    try {
        if (s->parsed()) return cmd_synth(synth);
        if (p->parsed()) return cmd_pairs(pairs);
        if (g->parsed()) return cmd_gradcheck(grad);
        if (t->parsed()) return cmd_train(train);
        if (e->parsed()) return cmd_eval(eval);
        if (r->parsed()) return cmd_grid(grid);
    } catch (const InputError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitInput;
    } catch (const NumericalError& err) {
        std::cerr << "numerical error: " << err.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& err) {
        std::cerr << "runtime error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitInput;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace structrep::tools
