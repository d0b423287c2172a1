#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace structrep::testing {

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// (key, rank) tuples of a claim under the granularity, no collision handling.
std::set<std::pair<std::string, int>> mapped_tuples(const Claim& c, const Corpus& pool, Granularity g) {
    std::set<std::pair<std::string, int>> out;
    for (const auto& l : c.labels) {
        const std::string key = g == Granularity::Aspect ? l.aspect : pool.taxonomy.mapping().at(l.aspect);
        out.emplace(key, static_cast<int>(l.action));
    }
    return out;
}

std::map<std::string, int> dict(const Claim& c, const Corpus& pool, Granularity g) {
    std::map<std::string, int> out;
    for (const auto& [key, r] : mapped_tuples(c, pool, g)) {
        auto [it, fresh] = out.emplace(key, r);
        if (!fresh) it->second = std::max(it->second, r);
    }
    return out;
}

int pi(int r) {
    // indeterminate -> planning, planning -> implemented, implemented -> planning
    static const int table[3] = {1, 2, 1};
    return table[r];
}

std::vector<double> adapted_unit(const Adapter& a, std::span<const double> x) {
    const std::size_t d = x.size();
    const std::size_t r = a.down.rows();
    std::vector<double> hidden(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < d; ++j) hidden[i] += a.down(i, j) * x[j];
    }
    std::vector<double> y(x.begin(), x.end());
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < r; ++j) y[i] += a.scale * a.up(i, j) * hidden[j];
    }
    double n2 = 0.0;
    for (double v : y) n2 += v * v;
    const double n = std::sqrt(n2);
    for (double& v : y) v /= n;
    return y;
}

double sim(const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

}  // namespace

Corpus random_corpus(Rng& rng, int max_claims, int max_aspects, int max_categories, int dim) {
    const int n_categories = uniform_int(rng, 1, max_categories);
    const int n_aspects = uniform_int(rng, n_categories, std::max(n_categories, max_aspects));
    std::map<std::string, std::string> mapping;
    for (int a = 0; a < n_aspects; ++a) {
        // every category receives at least one aspect
        const int c = a < n_categories ? a : uniform_int(rng, 0, n_categories - 1);
        mapping["a" + std::to_string(a)] = "c" + std::to_string(c);
    }
    Corpus corpus;
    corpus.taxonomy = Taxonomy(mapping);
    corpus.dim = static_cast<std::size_t>(dim);
    const int n = uniform_int(rng, 0, max_claims);
    std::normal_distribution<double> normal;
    for (int i = 0; i < n; ++i) {
        Claim c;
        c.id = "x" + std::to_string(i);
        for (int j = 0; j < dim; ++j) c.embedding.push_back(normal(rng));
        const int n_labels = uniform_int(rng, 0, 3);
        std::set<Label> labels;
        for (int l = 0; l < n_labels; ++l) {
            labels.insert(Label{"a" + std::to_string(uniform_int(rng, 0, n_aspects - 1)),
                                static_cast<ActionLevel>(uniform_int(rng, 0, 2))});
        }
        c.labels.assign(labels.begin(), labels.end());
        corpus.claims.push_back(std::move(c));
    }
    return corpus;
}

OraclePairs oracle_contrastive(const Corpus& pool, std::size_t anchor, Granularity g) {
    const auto mine = mapped_tuples(pool.claims[anchor], pool, g);
    OraclePairs out;
    for (std::size_t j = 0; j < pool.claims.size(); ++j) {
        if (j == anchor) continue;
        const auto theirs = mapped_tuples(pool.claims[j], pool, g);
        bool shared = false;
        for (const auto& t : mine) shared = shared || theirs.count(t) > 0;
        (shared ? out.positives : out.negatives).push_back(pool.claims[j].id);
    }
    return out;
}

OraclePairs oracle_ordinal(const Corpus& pool, std::size_t anchor, Granularity g) {
    const auto di = dict(pool.claims[anchor], pool, g);
    OraclePairs out;
    for (std::size_t j = 0; j < pool.claims.size(); ++j) {
        if (j == anchor) continue;
        const auto dj = dict(pool.claims[j], pool, g);
        bool positive = false;
        for (const auto& [k, a] : di) {
            auto it = dj.find(k);
            if (it != dj.end() && it->second == pi(a)) positive = true;
        }
        (positive ? out.positives : out.negatives).push_back(pool.claims[j].id);
    }
    return out;
}

std::vector<std::pair<double, double>> reference_losses(const Adapter& adapter, const Matrix& base,
                                                        const Batch& batch, const ObjectiveParams& params) {
    auto z = [&](std::size_t row) { return adapted_unit(adapter, base.row(row)); };
    std::vector<std::pair<double, double>> out;
    for (const auto& m : batch) {
        const auto a = z(m.anchor);
        double l_ctr = 0.0;
        double l_ord = 0.0;
        if (!m.ctr_positives.empty()) {
            double num = 0.0;
            double den = 0.0;
            for (auto p : m.ctr_positives) num += std::exp(sim(a, z(p)) / params.tau);
            den = num;
            for (auto q : m.ctr_negatives) den += std::exp(sim(a, z(q)) / params.tau);
            l_ctr = -std::log(num / den);
        }
        if (!m.ord_positives.empty() && !m.ord_negatives.empty()) {
            double dp = 0.0;
            double dn = 0.0;
            for (auto p : m.ord_positives) dp += 1.0 - sim(a, z(p));
            for (auto q : m.ord_negatives) dn += 1.0 - sim(a, z(q));
            dp /= static_cast<double>(m.ord_positives.size());
            dn /= static_cast<double>(m.ord_negatives.size());
            l_ord = std::max(0.0, dp - dn + params.margin_m0);
        }
        out.emplace_back(l_ctr, l_ord);
    }
    return out;
}

double reference_objective(const Adapter& adapter, const Matrix& base, const Batch& batch,
                           const ObjectiveParams& params, const Weighting& w, int term) {
    double total = 0.0;
    for (const auto& [l_ctr, l_ord] : reference_losses(adapter, base, batch, params)) {
        double w_ctr = 1.0;
        double w_ord = 0.0;
        if (w.ordinal && !w.gating) {
            w_ctr = w_ord = 0.5;
        } else if (w.ordinal) {
            const double s = l_ctr / w.t_ctr - l_ord / w.t_ord;
            w_ctr = std::exp(s) / (std::exp(s) + std::exp(-s));
            w_ord = 1.0 - w_ctr;
        }
        if (term != 2) total += w.lambda_base * w_ctr * l_ctr;
        if (term != 1) total += w.lambda_ord * w_ord * l_ord;
    }
    return total / static_cast<double>(batch.size());
}

AdapterGrad fd_gradient(const Adapter& adapter, const Matrix& base, const Batch& batch,
                        const ObjectiveParams& params, const Weighting& weighting, int term, double h) {
    AdapterGrad g{Matrix(adapter.down.rows(), adapter.down.cols()), Matrix(adapter.up.rows(), adapter.up.cols())};
    Adapter probe = adapter;
    auto sweep = [&](Matrix& target, Matrix& out) {
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double keep = target.values()[i];
            target.values()[i] = keep + h;
            const double plus = reference_objective(probe, base, batch, params, weighting, term);
            target.values()[i] = keep - h;
            const double minus = reference_objective(probe, base, batch, params, weighting, term);
            target.values()[i] = keep;
            out.values()[i] = (plus - minus) / (2.0 * h);
        }
    };
    sweep(probe.down, g.d_down);
    sweep(probe.up, g.d_up);
    return g;
}

double max_rel_error(const AdapterGrad& analytic, const AdapterGrad& fd) {
    double worst = 0.0;
    auto scan = [&](const Matrix& a, const Matrix& f) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double fv = f.values()[i];
            worst = std::max(worst, std::abs(a.values()[i] - fv) / std::max(1.0, std::abs(fv)));
        }
    };
    scan(analytic.d_down, fd.d_down);
    scan(analytic.d_up, fd.d_up);
    return worst;
}

double reference_calinski_harabasz(const std::vector<std::vector<double>>& points, const std::vector<int>& labels) {
    const std::size_t n = points.size();
    const std::size_t d = points.front().size();
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
    const double k = static_cast<double>(members.size());

    std::vector<double> mean(d, 0.0);
    for (const auto& p : points) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j] / static_cast<double>(n);
    }
    double between = 0.0;
    double within = 0.0;
    for (const auto& [label, idx] : members) {
        std::vector<double> c(d, 0.0);
        for (auto i : idx) {
            for (std::size_t j = 0; j < d; ++j) c[j] += points[i][j] / static_cast<double>(idx.size());
        }
        for (std::size_t j = 0; j < d; ++j) between += static_cast<double>(idx.size()) * (c[j] - mean[j]) * (c[j] - mean[j]);
        for (auto i : idx) {
            for (std::size_t j = 0; j < d; ++j) within += (points[i][j] - c[j]) * (points[i][j] - c[j]);
        }
    }
    return (between / (k - 1.0)) / (within / (static_cast<double>(n) - k));
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma) {
    std::normal_distribution<double> normal(0.0, sigma);
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = normal(rng);
    return m;
}

RandomInstance random_instance(Rng& rng, int max_dim, int max_rank, int max_batch, int max_pos, int max_neg,
                               bool zero_up) {
    const int d = uniform_int(rng, 3, max_dim);
    const int r = uniform_int(rng, 1, std::min(max_rank, d));
    const int b = uniform_int(rng, 1, max_batch);
    const int k = uniform_int(rng, 1, max_pos);
    const int m = uniform_int(rng, 1, max_neg);
    const auto n = static_cast<std::size_t>(b + k + m + 2);
    RandomInstance in;
    in.base = gaussian_matrix(rng, n, static_cast<std::size_t>(d));
    in.adapter.down = gaussian_matrix(rng, static_cast<std::size_t>(r), static_cast<std::size_t>(d),
                                      1.0 / std::sqrt(static_cast<double>(r)));
    in.adapter.up = zero_up ? Matrix(static_cast<std::size_t>(d), static_cast<std::size_t>(r))
                            : gaussian_matrix(rng, static_cast<std::size_t>(d), static_cast<std::size_t>(r), 0.3);
    in.adapter.scale = 16.0 / r;
    auto pick = [&](std::size_t count, std::size_t avoid) {
        std::vector<std::size_t> all;
        for (std::size_t i = 0; i < n; ++i) {
            if (i != avoid) all.push_back(i);
        }
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(count);
        std::sort(all.begin(), all.end());
        return all;
    };
    for (int i = 0; i < b; ++i) {
        BatchMember member;
        member.anchor = static_cast<std::size_t>(i);
        member.ctr_positives = pick(static_cast<std::size_t>(k), member.anchor);
        member.ctr_negatives = pick(static_cast<std::size_t>(m), member.anchor);
        member.ord_positives = pick(static_cast<std::size_t>(k), member.anchor);
        member.ord_negatives = pick(static_cast<std::size_t>(m), member.anchor);
        in.batch.push_back(std::move(member));
    }
    return in;
}

}  // namespace structrep::testing
