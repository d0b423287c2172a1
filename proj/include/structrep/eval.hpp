#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "structrep/corpus.hpp"
#include "structrep/matrix.hpp"

namespace structrep {

/// Claim id -> set of (category, action) tuples.
using TupleSets = std::map<std::string, std::set<Tuple>>;

/// Micro-averaged F1 over (claim, category, action) tuples. Claims with empty gold and empty
/// predictions contribute nothing; the score is 0 when there is nothing to match. Throws
/// InputError when the two maps cover different claim ids.
double tuple_f1(const TupleSets& predictions, const TupleSets& gold);

struct FoldScore {
    int fold_id = 0;
    double seen_f1 = 0.0;
    double unseen_f1 = 0.0;

    bool operator==(const FoldScore&) const = default;
};

struct ClusteringStats {
    std::string configuration;
    double silhouette = 0.0;
    double calinski_harabasz = 0.0;
    bool calinski_harabasz_saturated = false;
    double separation_ratio = 0.0;

    bool operator==(const ClusteringStats&) const = default;
};

struct EvalReport {
    std::vector<FoldScore> folds;
    std::optional<double> full_f1;
    double s_avg = 0.0;
    double us_avg = 0.0;
    double delta = 0.0;
    bool clustering_computed = false;
    std::vector<ClusteringStats> clustering;

    bool operator==(const EvalReport&) const = default;
};

/// Per-fold scores plus S Avg, US Avg and delta = US Avg - S Avg. Requires exactly fold ids
/// 0..n_folds-1; throws InputError naming the first missing fold.
EvalReport seen_unseen_report(std::vector<FoldScore> folds, int n_folds, std::optional<double> full_f1 = {});

/// Sentinel reported when the within-cluster dispersion is zero.
inline constexpr double kCalinskiHarabaszSentinel = 1e12;

/// Description stored in reports next to the separation values.
inline constexpr std::string_view kSeparationDefinition =
    "mean pairwise cosine distance between cluster centroids divided by itself plus the mean cosine "
    "distance of each point to its own centroid";

/// Mean silhouette under cosine distance. A point alone in its cluster has a = 0.
/// Throws InputError for fewer than two clusters.
double silhouette(const Matrix& embeddings, std::span<const int> labels);

/// Calinski-Harabasz index with Euclidean dispersion on the row-normalized embeddings. Returns
/// kCalinskiHarabaszSentinel when the within-cluster dispersion is zero. Requires n > k >= 2.
double calinski_harabasz(const Matrix& embeddings, std::span<const int> labels);
/// The same index on the rows as given (no normalization).
double calinski_harabasz_euclidean(const Matrix& points, std::span<const int> labels);

/// Separation index in [0, 1]: inter / (inter + within) with inter the mean cosine distance
/// between centroids of the normalized points and within the mean cosine distance of each point
/// to its own centroid. 0 when both are zero.
double separation_ratio(const Matrix& embeddings, std::span<const int> labels);

/// Cluster label per claim: its first label's category; unlabeled claims share one extra
/// cluster. `names` receives the cluster names indexed by label.
std::vector<int> cluster_labels(const Corpus& corpus, std::vector<std::string>* names = nullptr);

ClusteringStats clustering_stats(std::string configuration, const Matrix& embeddings, std::span<const int> labels);

/// Deterministic JSON: stable key order, numbers rounded to 6 decimals, delta recomputed from
/// the rounded averages.
std::string emit_report(const EvalReport& report);
EvalReport parse_report(std::string_view json_text);
void write_report(const EvalReport& report, const std::filesystem::path& path);

/// Table row in the column layout Full, S/US per fold, S Avg, US Avg, delta.
std::string report_csv_header(int n_folds);
std::string report_csv_row(std::string_view name, const EvalReport& report);

}  // namespace structrep
