#pragma once

#include <set>
#include <string>
#include <variant>
#include <vector>

#include "structrep/adapter.hpp"
#include "structrep/config.hpp"
#include "structrep/corpus.hpp"
#include "structrep/matrix.hpp"
#include "structrep/metagradnorm.hpp"

namespace structrep {

/// Linear multi-label head: one logit per (category, action) tuple over adapted, normalized
/// embeddings. Row c * 3 + rank(action) of `weight` scores tuple (categories[c], action).
struct TaskHead {
    std::vector<std::string> categories;
    Matrix weight;
    std::vector<double> bias;

    static TaskHead zeros(std::vector<std::string> categories, std::size_t dim);
    std::size_t tuples() const noexcept { return weight.rows(); }
    Tuple tuple_at(std::size_t row) const;
    std::vector<double> logits(std::span<const double> z) const;

    bool operator==(const TaskHead&) const = default;
};

// Run log records. Every record of a run is kept in emission order.

struct NoteRecord {
    std::string text;
};

struct BatchRecord {
    int stage = 1;
    int epoch = 0;
    int step = 0;
    int members = 0;
    double mean_ctr = 0.0;
    double mean_ord = 0.0;
    double objective = 0.0;
};

struct MetaRecord {
    int step = 0;
    MetaParams alpha;
    GradNormSnapshot snapshot;
};

struct EpochRecord {
    int stage = 1;
    int epoch = 0;
    double mean_ctr = 0.0;
    double mean_ord = 0.0;
    double mean_task = 0.0;
    MetaParams alpha;
    LossPair grad_norms{};
    double validation = 0.0;
};

using LogRecord = std::variant<NoteRecord, BatchRecord, MetaRecord, EpochRecord>;

struct RunLog {
    std::vector<LogRecord> records;
    std::vector<std::string> checkpoints;

    void note(std::string text) { records.emplace_back(NoteRecord{std::move(text)}); }
    void append(const RunLog& other);

    std::vector<BatchRecord> batches(int stage) const;
    std::vector<EpochRecord> epochs(int stage) const;
    std::vector<MetaRecord> meta_steps() const;

    /// One JSON object per line, in record order.
    std::string to_ndjson() const;
};

struct Stage1Result {
    Adapter adapter;
    MetaState meta;
    RunLog log;
};

struct Stage2Result {
    Adapter adapter;
    TaskHead head;
    RunLog log;
};

/// Training and validation ids of a fold: a seeded `validation_fraction` of the fold's train
/// ids is held out for early stopping and checkpoint selection.
struct TrainValidation {
    std::vector<std::string> train_ids;
    std::vector<std::string> validation_ids;
};

TrainValidation split_validation(const FoldSplit& fold, double validation_fraction, std::uint64_t seed);

/// Structured representation learning on the fold's training claims. Per batch: sample pairs,
/// evaluate the gated batch objective, take a gradient step on the adapter, then a meta-step
/// when MetaGradNorm is enabled. Early-stops on the unweighted validation losses and returns the
/// best-validation adapter. Throws InputError when no anchor has positives for any enabled
/// objective.
Stage1Result stage1_train(const TrainingConfig& config, const Corpus& corpus, const FoldSplit& fold);
Stage1Result stage1_train(const TrainingConfig& config, const Corpus& corpus, const FoldSplit& fold,
                          const Adapter& initial);

/// Multi-label (category, action) fine-tuning of a fresh head and the given adapter with
/// per-tuple logistic losses. Returns the best-validation-F1 head and adapter.
Stage2Result stage2_finetune(const TrainingConfig& config, const Adapter& adapter, const Corpus& corpus,
                             const FoldSplit& fold);

/// Tuples whose sigmoid(logit) exceeds the threshold.
std::set<Tuple> predict(const Adapter& adapter, const TaskHead& head, const Claim& claim, double threshold = 0.5);

/// Micro tuple F1 of the predictions on the given claim ids.
double split_f1(const Adapter& adapter, const TaskHead& head, const Corpus& corpus,
                const std::vector<std::string>& ids, double threshold = 0.5);

/// Normalized adapted embeddings of every claim, one row per claim.
Matrix adapted_embeddings(const Adapter& adapter, const Corpus& corpus);

/// Checksum over the adapter parameters (exact bit patterns).
std::uint64_t adapter_checksum(const Adapter& adapter);

/// Both stages on one fold followed by seen / unseen evaluation.
struct FoldRun {
    Adapter adapter;
    TaskHead head;
    MetaState meta;
    RunLog log;
    double seen_f1 = 0.0;
    double unseen_f1 = 0.0;
};

FoldRun run_fold(const TrainingConfig& config, const Corpus& corpus, const FoldSplit& fold);

}  // namespace structrep
