#include "structrep/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "structrep/error.hpp"
#include "structrep/random.hpp"

namespace structrep {

AdapterGrad AdapterGrad::zeros_like(const Adapter& adapter) {
    return AdapterGrad{Matrix(adapter.down.rows(), adapter.down.cols()), Matrix(adapter.up.rows(), adapter.up.cols())};
}

void AdapterGrad::add_scaled(const AdapterGrad& other, double factor) {
    auto add = [factor](std::span<double> dst, std::span<const double> src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
    };
    add(d_down.values(), other.d_down.values());
    add(d_up.values(), other.d_up.values());
}

double AdapterGrad::norm() const {
    double s = 0.0;
    for (double v : d_down.values()) s += v * v;
    for (double v : d_up.values()) s += v * v;
    return std::sqrt(s);
}

bool AdapterGrad::all_finite() const {
    auto finite = [](std::span<const double> xs) {
        return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
    };
    return finite(d_down.values()) && finite(d_up.values());
}

Adapter init_adapter(std::size_t dim, std::size_t rank, double lora_alpha, std::uint64_t seed) {
    if (rank < 1 || rank > dim) {
        throw InputError("adapter rank must satisfy 1 <= r <= d (r=" + std::to_string(rank) +
                         ", d=" + std::to_string(dim) + ")");
    }
    Adapter adapter;
    adapter.down = Matrix(rank, dim);
    adapter.up = Matrix(dim, rank);
    adapter.scale = lora_alpha / static_cast<double>(rank);
    auto rng = make_rng(seed, "adapter-init");
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(rank)));
    for (auto& v : adapter.down.values()) v = normal(rng);
    return adapter;
}

namespace {

void check_dim(const Adapter& adapter, std::span<const double> x) {
    if (x.size() != adapter.dim()) {
        throw InputError("adapter expects dimension " + std::to_string(adapter.dim()) + ", got " +
                         std::to_string(x.size()));
    }
}

std::vector<double> hidden_of(const Adapter& adapter, std::span<const double> x) {
    std::vector<double> h(adapter.rank(), 0.0);
    for (std::size_t k = 0; k < adapter.rank(); ++k) {
        const auto row = adapter.down.row(k);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += row[i] * x[i];
        h[k] = s;
    }
    return h;
}

std::vector<double> adapted_from_hidden(const Adapter& adapter, std::span<const double> x,
                                        std::span<const double> hidden) {
    std::vector<double> y(x.begin(), x.end());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto row = adapter.up.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < hidden.size(); ++k) s += row[k] * hidden[k];
        y[i] += adapter.scale * s;
    }
    return y;
}

}  // namespace

std::vector<double> forward(const Adapter& adapter, std::span<const double> x) {
    check_dim(adapter, x);
    return adapted_from_hidden(adapter, x, hidden_of(adapter, x));
}

AdaptedEmbedding embed(const Adapter& adapter, std::span<const double> x) {
    check_dim(adapter, x);
    AdaptedEmbedding out;
    out.hidden = hidden_of(adapter, x);
    auto y = adapted_from_hidden(adapter, x, out.hidden);
    out.norm = l2_norm(y);
    if (!(out.norm > kNormEpsilon)) throw NumericalError("adapted embedding collapsed to zero");
    for (auto& v : y) v /= out.norm;
    out.normalized = std::move(y);
    return out;
}

void backprop_normalized(const Adapter& adapter, std::span<const double> x, const AdaptedEmbedding& cache,
                         std::span<const double> d_normalized, AdapterGrad& out) {
    const std::size_t d = adapter.dim();
    const std::size_t r = adapter.rank();
    // z = y / |y|  =>  dy = (dz - z (z . dz)) / |y|
    const double radial = dot(cache.normalized, d_normalized);
    std::vector<double> dy(d);
    for (std::size_t i = 0; i < d; ++i) dy[i] = (d_normalized[i] - cache.normalized[i] * radial) / cache.norm;

    // y = x + s * up * h, h = down * x
    std::vector<double> dh(r, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double g = adapter.scale * dy[i];
        auto up_row = adapter.up.row(i);
        auto grad_row = out.d_up.row(i);
        for (std::size_t k = 0; k < r; ++k) {
            grad_row[k] += g * cache.hidden[k];
            dh[k] += g * up_row[k];
        }
    }
    for (std::size_t k = 0; k < r; ++k) {
        if (dh[k] == 0.0) continue;
        auto grad_row = out.d_down.row(k);
        for (std::size_t i = 0; i < d; ++i) grad_row[i] += dh[k] * x[i];
    }
}

Adapter sgd_step(const Adapter& adapter, const AdapterGrad& grad, double eta_theta) {
    if (!(eta_theta > 0.0)) throw InputError("eta_theta must be > 0");
    if (!grad.all_finite()) throw NumericalError("non-finite adapter gradient");
    Adapter next = adapter;
    auto step = [eta_theta](std::span<double> w, std::span<const double> g) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta_theta * g[i];
    };
    step(next.down.values(), grad.d_down.values());
    step(next.up.values(), grad.d_up.values());
    return next;
}

namespace {

// Adapted, normalized embeddings of every row a batch touches.
class EmbeddingCache {
public:
    EmbeddingCache(const Adapter& adapter, const Matrix& base, const Batch& batch) : adapter_(adapter), base_(base) {
        auto add = [&](std::size_t row) {
            if (row >= base.rows()) throw InputError("batch references row outside the embedding table");
            if (!entries_.count(row)) entries_.emplace(row, embed(adapter, base.row(row)));
        };
        for (const auto& m : batch) {
            add(m.anchor);
            for (auto j : m.ctr_positives) add(j);
            for (auto j : m.ctr_negatives) add(j);
            for (auto j : m.ord_positives) add(j);
            for (auto j : m.ord_negatives) add(j);
        }
    }

    std::span<const double> z(std::size_t row) const { return entries_.at(row).normalized; }

    void backprop(std::size_t row, std::span<const double> dz, AdapterGrad& out) const {
        backprop_normalized(adapter_, base_.row(row), entries_.at(row), dz, out);
    }

private:
    const Adapter& adapter_;
    const Matrix& base_;
    std::map<std::size_t, AdaptedEmbedding> entries_;
};

std::vector<double> sims(const EmbeddingCache& cache, std::size_t anchor, const std::vector<std::size_t>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    const auto a = cache.z(anchor);
    for (auto j : rows) out.push_back(std::clamp(dot(a, cache.z(j)), -1.0, 1.0));
    return out;
}

// Accumulates d loss / d z for every row a similarity-based loss touched (s_j = z_a . z_j), then
// pushes the result through normalization and the adapter.
AdapterGrad similarity_backprop(const EmbeddingCache& cache, const Adapter& adapter, std::size_t anchor,
                                const std::vector<std::size_t>& positives, const std::vector<std::size_t>& negatives,
                                const SimilarityLoss& loss) {
    std::map<std::size_t, std::vector<double>> dz;
    const std::size_t d = adapter.dim();
    auto accumulate = [&](std::size_t row, std::span<const double> direction, double coeff) {
        auto& g = dz.try_emplace(row, d, 0.0).first->second;
        for (std::size_t i = 0; i < d; ++i) g[i] += coeff * direction[i];
    };
    const auto a = cache.z(anchor);
    for (std::size_t k = 0; k < positives.size(); ++k) {
        accumulate(anchor, cache.z(positives[k]), loss.d_positive[k]);
        accumulate(positives[k], a, loss.d_positive[k]);
    }
    for (std::size_t m = 0; m < negatives.size(); ++m) {
        accumulate(anchor, cache.z(negatives[m]), loss.d_negative[m]);
        accumulate(negatives[m], a, loss.d_negative[m]);
    }
    AdapterGrad grad = AdapterGrad::zeros_like(adapter);
    for (const auto& [row, g] : dz) cache.backprop(row, g, grad);
    return grad;
}

}  // namespace

SampleGradients sample_gradients(const Adapter& adapter, const Matrix& base, const Batch& batch,
                                 const ObjectiveParams& params) {
    const EmbeddingCache cache(adapter, base, batch);
    SampleGradients table;
    table.l_ctr.reserve(batch.size());
    table.l_ord.reserve(batch.size());
    for (const auto& m : batch) {
        if (m.has_contrastive()) {
            const auto loss = contrastive_from_similarities(sims(cache, m.anchor, m.ctr_positives),
                                                            sims(cache, m.anchor, m.ctr_negatives), params.tau);
            table.l_ctr.push_back(loss.value);
            table.grad_ctr.push_back(
                similarity_backprop(cache, adapter, m.anchor, m.ctr_positives, m.ctr_negatives, loss));
        } else {
            table.l_ctr.push_back(0.0);
            table.grad_ctr.push_back(AdapterGrad::zeros_like(adapter));
        }
        if (m.has_ordinal()) {
            const auto loss = ordinal_from_similarities(sims(cache, m.anchor, m.ord_positives),
                                                        sims(cache, m.anchor, m.ord_negatives), params.margin_m0);
            table.l_ord.push_back(loss.value);
            table.grad_ord.push_back(
                similarity_backprop(cache, adapter, m.anchor, m.ord_positives, m.ord_negatives, loss));
        } else {
            table.l_ord.push_back(0.0);
            table.grad_ord.push_back(AdapterGrad::zeros_like(adapter));
        }
    }
    return table;
}

std::vector<std::pair<double, double>> batch_losses(const Adapter& adapter, const Matrix& base, const Batch& batch,
                                                    const ObjectiveParams& params) {
    const EmbeddingCache cache(adapter, base, batch);
    std::vector<std::pair<double, double>> out;
    out.reserve(batch.size());
    for (const auto& m : batch) {
        double l_ctr = 0.0;
        double l_ord = 0.0;
        if (m.has_contrastive()) {
            l_ctr = contrastive_from_similarities(sims(cache, m.anchor, m.ctr_positives),
                                                  sims(cache, m.anchor, m.ctr_negatives), params.tau)
                        .value;
        }
        if (m.has_ordinal()) {
            l_ord = ordinal_from_similarities(sims(cache, m.anchor, m.ord_positives),
                                              sims(cache, m.anchor, m.ord_negatives), params.margin_m0)
                        .value;
        }
        out.emplace_back(l_ctr, l_ord);
    }
    return out;
}

BackwardResult combine(const SampleGradients& table, const Weighting& weighting, Term term) {
    if (table.size() == 0) throw InputError("empty batch");
    if (table.grad_ctr.empty()) throw InputError("gradient table has no entries");
    BackwardResult out;
    out.grad = AdapterGrad{Matrix(table.grad_ctr.front().d_down.rows(), table.grad_ctr.front().d_down.cols()),
                           Matrix(table.grad_ctr.front().d_up.rows(), table.grad_ctr.front().d_up.cols())};
    const double inv_b = 1.0 / static_cast<double>(table.size());
    const bool want_ctr = term != Term::Ordinal;
    const bool want_ord = term != Term::Contrastive && weighting.ordinal;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const double lc = table.l_ctr[i];
        const double lo = weighting.ordinal ? table.l_ord[i] : 0.0;
        const GateWeights g = effective_gate(lc, lo, weighting);
        out.samples.push_back(PerSampleLosses{lc, lo, g});
        const TermPartials p = term_partials(lc, lo, weighting);

        double by_lctr = 0.0;
        double by_lord = 0.0;
        if (want_ctr) {
            out.objective += inv_b * weighting.lambda_base * g.w_ctr * lc;
            by_lctr += p.ctr_by_lctr;
            by_lord += p.ctr_by_lord;
        }
        if (want_ord) {
            out.objective += inv_b * weighting.lambda_ord * g.w_ord * lo;
            by_lctr += p.ord_by_lctr;
            by_lord += p.ord_by_lord;
        }
#ifdef STRUCTREP_FAULT_SIGN_FLIP
        by_lctr = -by_lctr;
#endif
        if (by_lctr != 0.0) out.grad.add_scaled(table.grad_ctr[i], inv_b * by_lctr);
        if (by_lord != 0.0 && weighting.ordinal) out.grad.add_scaled(table.grad_ord[i], inv_b * by_lord);
    }
    return out;
}

BackwardResult backward(const Adapter& adapter, const Matrix& base, const Batch& batch,
                        const ObjectiveParams& params, const Weighting& weighting) {
    if (batch.empty()) throw InputError("backward on an empty batch");
    return combine(sample_gradients(adapter, base, batch, params), weighting, Term::Total);
}

Matrix embedding_table(const Corpus& corpus) {
    Matrix table(corpus.claims.size(), corpus.dim);
    for (std::size_t i = 0; i < corpus.claims.size(); ++i) {
        const auto& e = corpus.claims[i].embedding;
        std::copy(e.begin(), e.end(), table.row(i).begin());
    }
    return table;
}

}  // namespace structrep
