#include "structrep/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "structrep/error.hpp"
#include "structrep/eval.hpp"
#include "structrep/objectives.hpp"
#include "structrep/pairing.hpp"
#include "structrep/random.hpp"

namespace structrep {

using ordered_json = nlohmann::ordered_json;

TaskHead TaskHead::zeros(std::vector<std::string> categories, std::size_t dim) {
    TaskHead head;
    const std::size_t rows = categories.size() * kActionLevels;
    head.categories = std::move(categories);
    head.weight = Matrix(rows, dim);
    head.bias.assign(rows, 0.0);
    return head;
}

Tuple TaskHead::tuple_at(std::size_t row) const {
    return {categories.at(row / kActionLevels), action_from_rank(static_cast<int>(row % kActionLevels))};
}

std::vector<double> TaskHead::logits(std::span<const double> z) const {
    if (z.size() != weight.cols()) throw InputError("task head dimension mismatch");
    std::vector<double> out(bias);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += dot(weight.row(t), z);
    return out;
}

void RunLog::append(const RunLog& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
    checkpoints.insert(checkpoints.end(), other.checkpoints.begin(), other.checkpoints.end());
}

namespace {

template <typename T>
std::vector<T> records_of(const std::vector<LogRecord>& records) {
    std::vector<T> out;
    for (const auto& r : records) {
        if (const auto* p = std::get_if<T>(&r)) out.push_back(*p);
    }
    return out;
}

ordered_json alpha_json(const MetaParams& p) {
    return {{"lambda_base", p.lambda_base}, {"lambda_ord", p.lambda_ord}, {"t_ctr", p.t_ctr}, {"t_ord", p.t_ord}};
}

ordered_json pair_json(const LossPair& p) { return ordered_json::array({p[0], p[1]}); }

ordered_json to_json(const LogRecord& record) {
    return std::visit(
        [](const auto& r) -> ordered_json {
            using T = std::decay_t<decltype(r)>;
            ordered_json j;
            if constexpr (std::is_same_v<T, NoteRecord>) {
                j["type"] = "note";
                j["text"] = r.text;
            } else if constexpr (std::is_same_v<T, BatchRecord>) {
                j["type"] = "batch";
                j["stage"] = r.stage;
                j["epoch"] = r.epoch;
                j["step"] = r.step;
                j["members"] = r.members;
                j["mean_ctr"] = r.mean_ctr;
                j["mean_ord"] = r.mean_ord;
                j["objective"] = r.objective;
            } else if constexpr (std::is_same_v<T, MetaRecord>) {
                j["type"] = "meta";
                j["step"] = r.step;
                j["alpha"] = alpha_json(r.alpha);
                j["grad_norms"] = pair_json(r.snapshot.grad_norms);
                j["ratios"] = pair_json(r.snapshot.ratios);
                j["targets"] = pair_json(r.snapshot.target);
                j["meta_objective"] = r.snapshot.objective;
            } else {
                j["type"] = "epoch";
                j["stage"] = r.stage;
                j["epoch"] = r.epoch;
                j["mean_ctr"] = r.mean_ctr;
                j["mean_ord"] = r.mean_ord;
                j["mean_task"] = r.mean_task;
                j["alpha"] = alpha_json(r.alpha);
                j["grad_norms"] = pair_json(r.grad_norms);
                j["validation"] = r.validation;
            }
            return j;
        },
        record);
}

}  // namespace

std::vector<BatchRecord> RunLog::batches(int stage) const {
    auto all = records_of<BatchRecord>(records);
    std::erase_if(all, [stage](const BatchRecord& r) { return r.stage != stage; });
    return all;
}

std::vector<EpochRecord> RunLog::epochs(int stage) const {
    auto all = records_of<EpochRecord>(records);
    std::erase_if(all, [stage](const EpochRecord& r) { return r.stage != stage; });
    return all;
}

std::vector<MetaRecord> RunLog::meta_steps() const { return records_of<MetaRecord>(records); }

std::string RunLog::to_ndjson() const {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    if (!checkpoints.empty()) {
        ordered_json j;
        j["type"] = "checkpoints";
        j["paths"] = checkpoints;
        out += j.dump() + "\n";
    }
    return out;
}

TrainValidation split_validation(const FoldSplit& fold, double validation_fraction, std::uint64_t seed) {
    Rng rng = make_rng(seed, "validation-split", static_cast<std::uint64_t>(static_cast<std::int64_t>(fold.fold_id)));
    auto [train, validation] = random_holdout(fold.train_ids, validation_fraction, rng);
    if (train.empty()) throw InputError("validation split leaves no training claims");
    return {std::move(train), std::move(validation)};
}

namespace {

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

bool has_usable_anchor(const PairCache& cache, bool ordinal) {
    for (std::size_t i = 0; i < cache.contrastive.size(); ++i) {
        if (cache.contrastive[i] && !cache.contrastive[i]->positives.empty()) return true;
        if (ordinal && cache.ordinal[i] && !cache.ordinal[i]->positives.empty() &&
            !cache.ordinal[i]->negatives.empty()) {
            return true;
        }
    }
    return false;
}

// Samples one batch member from precomputed sets; nullopt when neither enabled loss is defined.
std::optional<BatchMember> make_member(std::size_t anchor, const PairSets* ctr, const PairSets* ord,
                                       const TrainingConfig& config, Rng& rng) {
    BatchMember m;
    m.anchor = anchor;
    const auto k = static_cast<std::size_t>(config.k_max);
    const auto mm = static_cast<std::size_t>(config.m_max);
    if (ctr) {
        if (auto s = sample_pairs(*ctr, k, mm, rng)) {
            m.ctr_positives = std::move(s->positives);
            m.ctr_negatives = std::move(s->negatives);
        }
    }
    if (ord && config.flags.ordinal) {
        if (auto s = sample_pairs(*ord, k, mm, rng)) {
            m.ord_positives = std::move(s->positives);
            m.ord_negatives = std::move(s->negatives);
        }
    }
    if (!m.has_ordinal()) {
        m.ord_positives.clear();
        m.ord_negatives.clear();
    }
    if (!m.has_contrastive() && !m.has_ordinal()) return std::nullopt;
    return m;
}

LossPair mean_losses(const SampleGradients& table) {
    LossPair out{0.0, 0.0};
    for (std::size_t i = 0; i < table.size(); ++i) {
        out[0] += table.l_ctr[i];
        out[1] += table.l_ord[i];
    }
    out[0] /= static_cast<double>(table.size());
    out[1] /= static_cast<double>(table.size());
    return out;
}

// Fixed validation batch: validation anchors paired against train + validation claims.
struct ValidationSet {
    Matrix base;
    Batch batch;
};

ValidationSet validation_set(const TrainingConfig& config, const Corpus& corpus, const TrainValidation& tv) {
    ValidationSet out;
    if (tv.validation_ids.empty()) return out;
    std::vector<std::string> ids = tv.train_ids;
    ids.insert(ids.end(), tv.validation_ids.begin(), tv.validation_ids.end());
    const Corpus pool = corpus.subset(ids);
    out.base = embedding_table(pool);
    Rng rng = make_rng(config.seed, "validation-pairs");
    for (std::size_t i = tv.train_ids.size(); i < pool.claims.size(); ++i) {
        if (pool.claims[i].labels.empty()) continue;
        const PairSets ctr = contrastive_pairs(pool, i, config.granularity);
        const PairSets ord = ordinal_pairs(pool, i, config.granularity);
        if (auto m = make_member(i, &ctr, &ord, config, rng)) out.batch.push_back(std::move(*m));
    }
    return out;
}

double validation_metric(const Adapter& adapter, const ValidationSet& vs, const TrainingConfig& config) {
    const auto losses = batch_losses(adapter, vs.base, vs.batch, config.objective_params());
    double ctr = 0.0;
    double ord = 0.0;
    for (const auto& [c, o] : losses) {
        ctr += c;
        ord += o;
    }
    const auto n = static_cast<double>(losses.size());
    return ctr / n + (config.flags.ordinal ? ord / n : 0.0);
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

Stage1Result stage1_train(const TrainingConfig& config, const Corpus& corpus, const FoldSplit& fold) {
    const Adapter initial =
        init_adapter(corpus.dim, static_cast<std::size_t>(config.rank), config.lora_alpha, config.seed);
    return stage1_train(config, corpus, fold, initial);
}

Stage1Result stage1_train(const TrainingConfig& config, const Corpus& corpus, const FoldSplit& fold,
                          const Adapter& initial) {
    config.validate();
    if (fold.train_ids.empty()) throw InputError("fold has no training claims");
    if (!config.flags.contrastive) throw InputError("stage 1 requires the contrastive objective");

    const TrainValidation tv = split_validation(fold, config.validation_fraction, config.seed);
    const Corpus pool = corpus.subset(tv.train_ids);
    const Matrix base = embedding_table(pool);
    const PairCache cache = build_pair_cache(pool, config.granularity, worker_count());
    if (!has_usable_anchor(cache, config.flags.ordinal)) {
        throw InputError("no anchor has positives for any enabled objective");
    }
    const ValidationSet vs = validation_set(config, corpus, tv);
    const ObjectiveParams params = config.objective_params();

    Stage1Result result{initial, config.initial_meta(), {}};
    result.log.note("stage 1: " + std::to_string(pool.claims.size()) + " training anchors, " +
                    std::to_string(vs.batch.size()) + " validation anchors");
    Adapter adapter = initial;
    MetaState meta = result.meta;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    int step = 0;

    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < pool.claims.size(); ++i) {
        if (!pool.claims[i].labels.empty()) anchors.push_back(i);
    }

    for (int epoch = 1; epoch <= config.stage1_epochs; ++epoch) {
        Rng rng = make_rng(config.seed, "stage1-epoch", static_cast<std::uint64_t>(epoch));
        std::shuffle(anchors.begin(), anchors.end(), rng);
        LossPair epoch_sum{0.0, 0.0};
        std::size_t epoch_members = 0;
        LossPair last_norms{0.0, 0.0};

        for (std::size_t start = 0; start < anchors.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(anchors.size(), start + static_cast<std::size_t>(config.batch_size));
            Batch batch;
            for (std::size_t a = start; a < stop; ++a) {
                const std::size_t i = anchors[a];
                const PairSets* ctr = cache.contrastive[i] ? &*cache.contrastive[i] : nullptr;
                const PairSets* ord = cache.ordinal[i] ? &*cache.ordinal[i] : nullptr;
                if (auto m = make_member(i, ctr, ord, config, rng)) batch.push_back(std::move(*m));
            }
            if (batch.empty()) continue;
            ++step;

            const Weighting weighting = config.weighting(meta);
            const SampleGradients table = sample_gradients(adapter, base, batch, params);
            const BackwardResult bw = combine(table, weighting);
            require_finite(bw.objective, "stage-1 objective");
            const LossPair means = mean_losses(table);
            if (!meta.initial_losses) meta.initial_losses = means;

            adapter = sgd_step(adapter, bw.grad, config.eta_theta);
            result.log.records.emplace_back(BatchRecord{1, epoch, step, static_cast<int>(batch.size()), means[0],
                                                        means[1], bw.objective});
            epoch_sum[0] += means[0] * static_cast<double>(batch.size());
            epoch_sum[1] += means[1] * static_cast<double>(batch.size());
            epoch_members += batch.size();

            if (config.flags.metagradnorm && step % config.meta_interval == 0) {
                const MetaStepResult ms = meta_step(meta, adapter, base, batch, params, config.weighting(meta));
                meta = ms.state;
                last_norms = ms.before.grad_norms;
                result.log.records.emplace_back(MetaRecord{step, meta.materialized(), ms.before});
            } else {
                last_norms = grad_norms(table, weighting);
            }
        }
        if (epoch_members == 0) throw InputError("no anchor has positives for any enabled objective");

        const double validation = vs.batch.empty()
                                      ? epoch_sum[0] / static_cast<double>(epoch_members) +
                                            (config.flags.ordinal ? epoch_sum[1] / static_cast<double>(epoch_members) : 0.0)
                                      : validation_metric(adapter, vs, config);
        require_finite(validation, "stage-1 validation objective");
        EpochRecord rec;
        rec.stage = 1;
        rec.epoch = epoch;
        rec.mean_ctr = epoch_sum[0] / static_cast<double>(epoch_members);
        rec.mean_ord = epoch_sum[1] / static_cast<double>(epoch_members);
        rec.alpha = meta.materialized();
        rec.grad_norms = last_norms;
        rec.validation = validation;
        result.log.records.emplace_back(rec);

        if (validation < best) {
            best = validation;
            stale = 0;
            result.adapter = adapter;
            result.meta = meta;
        } else if (++stale >= config.patience) {
            result.log.note("stage 1: early stop after epoch " + std::to_string(epoch));
            break;
        }
    }
    return result;
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> tuple_targets(const TaskHead& head, const Claim& claim, const Taxonomy& taxonomy) {
    std::vector<double> y(head.tuples(), 0.0);
    for (const auto& [category, action] : category_tuples(claim, taxonomy)) {
        const auto it = std::lower_bound(head.categories.begin(), head.categories.end(), category);
        if (it == head.categories.end() || *it != category) continue;
        y[static_cast<std::size_t>(it - head.categories.begin()) * kActionLevels + static_cast<std::size_t>(rank(action))] =
            1.0;
    }
    return y;
}

TupleSets gold_tuples(const Corpus& corpus, const std::vector<std::string>& ids) {
    TupleSets out;
    for (const auto& id : ids) out[id] = category_tuples(corpus.claims[corpus.index_of(id)], corpus.taxonomy);
    return out;
}

TupleSets predicted_tuples(const Adapter& adapter, const TaskHead& head, const Corpus& corpus,
                           const std::vector<std::string>& ids, double threshold) {
    TupleSets out;
    for (const auto& id : ids) out[id] = predict(adapter, head, corpus.claims[corpus.index_of(id)], threshold);
    return out;
}

std::string hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

}  // namespace

Stage2Result stage2_finetune(const TrainingConfig& config, const Adapter& adapter, const Corpus& corpus,
                             const FoldSplit& fold) {
    config.validate();
    const TrainValidation tv = split_validation(fold, config.validation_fraction, config.seed);
    const Corpus train = corpus.subset(tv.train_ids);
    bool any_label = false;
    for (const auto& c : train.claims) any_label = any_label || !c.labels.empty();
    if (corpus.taxonomy.categories().empty() || !any_label) throw InputError("label space is empty");

    Adapter current = config.flags.stage2_reinit
                          ? init_adapter(corpus.dim, static_cast<std::size_t>(config.rank), config.lora_alpha,
                                         config.seed)
                          : adapter;
    TaskHead head = TaskHead::zeros(corpus.taxonomy.categories(), corpus.dim);
    Stage2Result result{current, head, {}};
    result.log.note("stage 2: loss balancer inactive (single objective)");
    result.log.note(std::string("stage 2: ") + (config.flags.stage2_reinit ? "reinitialized adapter" : "same adapter") +
                    ", checksum " + hex(adapter_checksum(current)));

    std::vector<std::vector<double>> targets;
    targets.reserve(train.claims.size());
    for (const auto& c : train.claims) targets.push_back(tuple_targets(head, c, corpus.taxonomy));

    const std::vector<std::string>& select_ids = tv.validation_ids.empty() ? tv.train_ids : tv.validation_ids;
    std::vector<std::size_t> order(train.claims.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = -1.0;
    int stale = 0;

    for (int epoch = 1; epoch <= config.stage2_epochs; ++epoch) {
        Rng rng = make_rng(config.seed, "stage2-epoch", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double task_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            Matrix d_weight(head.weight.rows(), head.weight.cols());
            std::vector<double> d_bias(head.bias.size(), 0.0);
            AdapterGrad grad = AdapterGrad::zeros_like(current);

            for (std::size_t s = start; s < stop; ++s) {
                const std::size_t i = order[s];
                const auto& x = train.claims[i].embedding;
                const AdaptedEmbedding e = embed(current, x);
                const auto logits = head.logits(e.normalized);
                const auto& y = targets[i];
                std::vector<double> dz(e.normalized.size(), 0.0);
                for (std::size_t t = 0; t < logits.size(); ++t) {
                    // softplus(l) - y l is the per-tuple logistic loss
                    const double l = logits[t];
                    task_sum += std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))) - y[t] * l;
                    const double g = (sigmoid(l) - y[t]) * inv_b;
                    d_bias[t] += g;
                    auto dw = d_weight.row(t);
                    const auto w = head.weight.row(t);
                    for (std::size_t j = 0; j < dz.size(); ++j) {
                        dw[j] += g * e.normalized[j];
                        dz[j] += g * w[j];
                    }
                }
                backprop_normalized(current, x, e, dz, grad);
            }
            for (std::size_t k = 0; k < head.weight.size(); ++k) {
                head.weight.values()[k] -= config.eta_ft * d_weight.values()[k];
            }
            for (std::size_t t = 0; t < head.bias.size(); ++t) head.bias[t] -= config.eta_ft * d_bias[t];
            current = sgd_step(current, grad, config.eta_ft);
        }
        const double mean_task = task_sum / static_cast<double>(order.size());
        require_finite(mean_task, "stage-2 task loss");
        const double validation = split_f1(current, head, corpus, select_ids, config.threshold);

        EpochRecord rec;
        rec.stage = 2;
        rec.epoch = epoch;
        rec.mean_task = mean_task;
        rec.validation = validation;
        result.log.records.emplace_back(rec);

        if (validation > best) {
            best = validation;
            stale = 0;
            result.adapter = current;
            result.head = head;
        } else if (++stale >= config.patience) {
            result.log.note("stage 2: early stop after epoch " + std::to_string(epoch));
            break;
        }
    }
    return result;
}

std::set<Tuple> predict(const Adapter& adapter, const TaskHead& head, const Claim& claim, double threshold) {
    const AdaptedEmbedding e = embed(adapter, claim.embedding);
    const auto logits = head.logits(e.normalized);
    std::set<Tuple> out;
    for (std::size_t t = 0; t < logits.size(); ++t) {
        if (sigmoid(logits[t]) > threshold) out.insert(head.tuple_at(t));
    }
    return out;
}

double split_f1(const Adapter& adapter, const TaskHead& head, const Corpus& corpus,
                const std::vector<std::string>& ids, double threshold) {
    return tuple_f1(predicted_tuples(adapter, head, corpus, ids, threshold), gold_tuples(corpus, ids));
}

Matrix adapted_embeddings(const Adapter& adapter, const Corpus& corpus) {
    Matrix out(corpus.claims.size(), corpus.dim);
    for (std::size_t i = 0; i < corpus.claims.size(); ++i) {
        const auto z = embed(adapter, corpus.claims[i].embedding).normalized;
        std::copy(z.begin(), z.end(), out.row(i).begin());
    }
    return out;
}

std::uint64_t adapter_checksum(const Adapter& adapter) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b, v >>= 8) {
            h ^= v & 0xFF;
            h *= 1099511628211ULL;
        }
    };
    mix(adapter.dim());
    mix(adapter.rank());
    mix(std::bit_cast<std::uint64_t>(adapter.scale));
    for (double v : adapter.down.values()) mix(std::bit_cast<std::uint64_t>(v));
    for (double v : adapter.up.values()) mix(std::bit_cast<std::uint64_t>(v));
    return h;
}

FoldRun run_fold(const TrainingConfig& config, const Corpus& corpus, const FoldSplit& fold) {
    config.validate();
    FoldRun run;
    run.adapter = init_adapter(corpus.dim, static_cast<std::size_t>(config.rank), config.lora_alpha, config.seed);
    run.meta = config.initial_meta();
    if (config.flags.stage1_enabled()) {
        Stage1Result s1 = stage1_train(config, corpus, fold, run.adapter);
        run.adapter = std::move(s1.adapter);
        run.meta = std::move(s1.meta);
        run.log.append(s1.log);
    } else {
        run.log.note("stage 1 skipped (no structured objectives enabled)");
    }
    Stage2Result s2 = stage2_finetune(config, run.adapter, corpus, fold);
    run.adapter = std::move(s2.adapter);
    run.head = std::move(s2.head);
    run.log.append(s2.log);

    run.seen_f1 = split_f1(run.adapter, run.head, corpus, fold.seen_test_ids, config.threshold);
    run.unseen_f1 = split_f1(run.adapter, run.head, corpus, fold.unseen_test_ids, config.threshold);
    return run;
}

}  // namespace structrep
