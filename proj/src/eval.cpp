#include "structrep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"
#include "structrep/error.hpp"
#include "structrep/io.hpp"
#include "structrep/objectives.hpp"

namespace structrep {

double tuple_f1(const TupleSets& predictions, const TupleSets& gold) {
    if (predictions.size() != gold.size()) throw InputError("prediction and gold claim sets differ");
    std::size_t hits = 0;
    std::size_t predicted = 0;
    std::size_t expected = 0;
    auto p = predictions.begin();
    for (auto g = gold.begin(); g != gold.end(); ++g, ++p) {
        if (p->first != g->first) throw InputError("prediction and gold claim sets differ at '" + g->first + "'");
        predicted += p->second.size();
        expected += g->second.size();
        for (const auto& t : p->second) hits += g->second.count(t);
    }
    if (hits == 0) return 0.0;
    const double precision = static_cast<double>(hits) / static_cast<double>(predicted);
    const double recall = static_cast<double>(hits) / static_cast<double>(expected);
    return 2.0 * precision * recall / (precision + recall);
}

EvalReport seen_unseen_report(std::vector<FoldScore> folds, int n_folds, std::optional<double> full_f1) {
    if (n_folds < 1) throw InputError("n_folds must be >= 1");
    std::sort(folds.begin(), folds.end(), [](const auto& a, const auto& b) { return a.fold_id < b.fold_id; });
    for (int f = 0; f < n_folds; ++f) {
        const bool present = std::any_of(folds.begin(), folds.end(), [f](const auto& s) { return s.fold_id == f; });
        if (!present) throw InputError("missing fold " + std::to_string(f) + " of " + std::to_string(n_folds));
    }
    if (folds.size() != static_cast<std::size_t>(n_folds)) {
        throw InputError("expected " + std::to_string(n_folds) + " folds, got " + std::to_string(folds.size()));
    }
    EvalReport report;
    report.folds = std::move(folds);
    report.full_f1 = full_f1;
    for (const auto& s : report.folds) {
        report.s_avg += s.seen_f1;
        report.us_avg += s.unseen_f1;
    }
    report.s_avg /= n_folds;
    report.us_avg /= n_folds;
    report.delta = report.us_avg - report.s_avg;
    return report;
}

namespace {

int cluster_count(std::span<const int> labels) {
    int k = 0;
    for (int l : labels) {
        if (l < 0) throw InputError("cluster labels must be non-negative");
        k = std::max(k, l + 1);
    }
    return k;
}

std::vector<std::size_t> cluster_sizes(std::span<const int> labels, int k) {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

void check_inputs(const Matrix& embeddings, std::span<const int> labels) {
    if (embeddings.rows() != labels.size()) throw InputError("one cluster label per embedding row required");
}

int nonempty_clusters(const std::vector<std::size_t>& sizes) {
    return static_cast<int>(std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }));
}

Matrix normalized_rows(const Matrix& embeddings) {
    Matrix out(embeddings.rows(), embeddings.cols());
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        const auto v = normalize(embeddings.row(i));
        std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
}

Matrix centroids(const Matrix& points, std::span<const int> labels, const std::vector<std::size_t>& sizes) {
    Matrix c(sizes.size(), points.cols());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto row = c.row(static_cast<std::size_t>(labels[i]));
        const auto p = points.row(i);
        for (std::size_t j = 0; j < p.size(); ++j) row[j] += p[j];
    }
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (sizes[k] == 0) continue;
        for (auto& v : c.row(k)) v /= static_cast<double>(sizes[k]);
    }
    return c;
}

}  // namespace

double silhouette(const Matrix& embeddings, std::span<const int> labels) {
    check_inputs(embeddings, labels);
    const int k = cluster_count(labels);
    const auto sizes = cluster_sizes(labels, k);
    if (nonempty_clusters(sizes) < 2) throw InputError("silhouette needs at least two clusters");

    const Matrix z = normalized_rows(embeddings);
    const std::size_t n = z.rows();
    double total = 0.0;
    std::vector<double> sums(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(labels[i]);
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[static_cast<std::size_t>(labels[j])] += 1.0 - std::clamp(dot(z.row(i), z.row(j)), -1.0, 1.0);
        }
        // a singleton has no intra-cluster distances; a = 0
        const double a = sizes[own] > 1 ? sums[own] / static_cast<double>(sizes[own] - 1) : 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sums.size(); ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

double calinski_harabasz(const Matrix& embeddings, std::span<const int> labels) {
    check_inputs(embeddings, labels);
    return calinski_harabasz_euclidean(normalized_rows(embeddings), labels);
}

double calinski_harabasz_euclidean(const Matrix& z, std::span<const int> labels) {
    check_inputs(z, labels);
    const int k_labels = cluster_count(labels);
    const auto sizes = cluster_sizes(labels, k_labels);
    const int k = nonempty_clusters(sizes);
    const std::size_t n = z.rows();
    if (k < 2) throw InputError("Calinski-Harabasz needs at least two clusters");
    if (n <= static_cast<std::size_t>(k)) throw InputError("Calinski-Harabasz needs more points than clusters");

    const Matrix c = centroids(z, labels, sizes);
    std::vector<double> overall(z.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) overall[j] += z(i, j);
    }
    for (auto& v : overall) v /= static_cast<double>(n);

    double between = 0.0;
    for (std::size_t q = 0; q < sizes.size(); ++q) {
        if (sizes[q] == 0) continue;
        double d2 = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) d2 += (c(q, j) - overall[j]) * (c(q, j) - overall[j]);
        between += static_cast<double>(sizes[q]) * d2;
    }
    double within = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto q = static_cast<std::size_t>(labels[i]);
        for (std::size_t j = 0; j < z.cols(); ++j) within += (z(i, j) - c(q, j)) * (z(i, j) - c(q, j));
    }
    if (within <= 0.0) return kCalinskiHarabaszSentinel;
    return (between / (k - 1)) / (within / static_cast<double>(n - static_cast<std::size_t>(k)));
}

double separation_ratio(const Matrix& embeddings, std::span<const int> labels) {
    check_inputs(embeddings, labels);
    const int k_labels = cluster_count(labels);
    const auto sizes = cluster_sizes(labels, k_labels);
    if (nonempty_clusters(sizes) < 2) throw InputError("separation ratio needs at least two clusters");

    const Matrix z = normalized_rows(embeddings);
    const Matrix c = centroids(z, labels, sizes);
    auto cos_dist = [](std::span<const double> u, std::span<const double> v) {
        const double nu = l2_norm(u);
        const double nv = l2_norm(v);
        if (!(nu > kNormEpsilon) || !(nv > kNormEpsilon)) throw NumericalError("degenerate cluster centroid");
        return 1.0 - std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
    };

    double inter = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < sizes.size(); ++a) {
        if (sizes[a] == 0) continue;
        for (std::size_t b = a + 1; b < sizes.size(); ++b) {
            if (sizes[b] == 0) continue;
            inter += cos_dist(c.row(a), c.row(b));
            ++pairs;
        }
    }
    inter /= static_cast<double>(pairs);
    double within = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) within += cos_dist(z.row(i), c.row(static_cast<std::size_t>(labels[i])));
    within /= static_cast<double>(z.rows());
    if (inter + within <= 0.0) return 0.0;
    return inter / (inter + within);
}

std::vector<int> cluster_labels(const Corpus& corpus, std::vector<std::string>* names) {
    std::vector<std::string> clusters = corpus.taxonomy.categories();
    const int none = static_cast<int>(clusters.size());
    bool any_unlabeled = false;
    std::vector<int> labels;
    labels.reserve(corpus.claims.size());
    for (const auto& claim : corpus.claims) {
        if (claim.labels.empty()) {
            labels.push_back(none);
            any_unlabeled = true;
            continue;
        }
        const auto& category = corpus.taxonomy.category_of(claim.labels.front().aspect);
        const auto it = std::lower_bound(clusters.begin(), clusters.end(), category);
        labels.push_back(static_cast<int>(it - clusters.begin()));
    }
    if (any_unlabeled) clusters.emplace_back("no-aspect");
    if (names) *names = std::move(clusters);
    return labels;
}

ClusteringStats clustering_stats(std::string configuration, const Matrix& embeddings, std::span<const int> labels) {
    ClusteringStats s;
    s.configuration = std::move(configuration);
    s.silhouette = silhouette(embeddings, labels);
    s.calinski_harabasz = calinski_harabasz(embeddings, labels);
    s.calinski_harabasz_saturated = s.calinski_harabasz == kCalinskiHarabaszSentinel;
    s.separation_ratio = separation_ratio(embeddings, labels);
    return s;
}

namespace {

using ordered_json = nlohmann::ordered_json;

double round6(double v) {
    if (!std::isfinite(v)) return v;
    const double r = std::round(v * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r;  // no negative zero
}

}  // namespace

std::string emit_report(const EvalReport& report) {
    ordered_json doc;
    doc["folds"] = ordered_json::array();
    for (const auto& f : report.folds) {
        doc["folds"].push_back({{"fold_id", f.fold_id}, {"seen_f1", round6(f.seen_f1)}, {"unseen_f1", round6(f.unseen_f1)}});
    }
    doc["full_f1"] = report.full_f1 ? ordered_json(round6(*report.full_f1)) : ordered_json(nullptr);
    const double s_avg = round6(report.s_avg);
    const double us_avg = round6(report.us_avg);
    doc["s_avg"] = s_avg;
    doc["us_avg"] = us_avg;
    doc["delta"] = round6(us_avg - s_avg);
    doc["clustering_computed"] = report.clustering_computed;
    if (report.clustering_computed) {
        ordered_json clustering;
        clustering["separation_definition"] = std::string(kSeparationDefinition);
        clustering["entries"] = ordered_json::array();
        for (const auto& c : report.clustering) {
            clustering["entries"].push_back({{"configuration", c.configuration},
                                             {"silhouette", round6(c.silhouette)},
                                             {"calinski_harabasz", round6(c.calinski_harabasz)},
                                             {"calinski_harabasz_saturated", c.calinski_harabasz_saturated},
                                             {"separation_ratio", round6(c.separation_ratio)}});
        }
        doc["clustering"] = std::move(clustering);
    }
    return doc.dump(2) + "\n";
}

EvalReport parse_report(std::string_view json_text) {
    try {
        const auto doc = nlohmann::json::parse(json_text);
        EvalReport r;
        for (const auto& f : doc.at("folds")) {
            r.folds.push_back(FoldScore{f.at("fold_id").get<int>(), f.at("seen_f1").get<double>(),
                                        f.at("unseen_f1").get<double>()});
        }
        if (!doc.at("full_f1").is_null()) r.full_f1 = doc.at("full_f1").get<double>();
        r.s_avg = doc.at("s_avg").get<double>();
        r.us_avg = doc.at("us_avg").get<double>();
        r.delta = doc.at("delta").get<double>();
        r.clustering_computed = doc.at("clustering_computed").get<bool>();
        if (r.clustering_computed) {
            for (const auto& c : doc.at("clustering").at("entries")) {
                r.clustering.push_back(ClusteringStats{c.at("configuration").get<std::string>(),
                                                       c.at("silhouette").get<double>(),
                                                       c.at("calinski_harabasz").get<double>(),
                                                       c.at("calinski_harabasz_saturated").get<bool>(),
                                                       c.at("separation_ratio").get<double>()});
            }
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed report: ") + e.what());
    }
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    write_text_file(path, emit_report(report));
}

std::string report_csv_header(int n_folds) {
    std::string out = "configuration,Full";
    for (int f = 1; f <= n_folds; ++f) out += ",S" + std::to_string(f) + ",US" + std::to_string(f);
    out += ",S Avg,US Avg,Delta\n";
    return out;
}

std::string report_csv_row(std::string_view name, const EvalReport& report) {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    std::string out(name);
    out += "," + (report.full_f1 ? fmt(*report.full_f1) : std::string());
    for (const auto& f : report.folds) out += "," + fmt(f.seen_f1) + "," + fmt(f.unseen_f1);
    out += "," + fmt(report.s_avg) + "," + fmt(report.us_avg) + "," + fmt(report.us_avg - report.s_avg) + "\n";
    return out;
}

}  // namespace structrep
