#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace structrep {

/// Ordinal actionability of a claim: Indeterminate < Planning < Implemented.
enum class ActionLevel : int { Indeterminate = 0, Planning = 1, Implemented = 2 };

inline constexpr int kActionLevels = 3;

inline constexpr int rank(ActionLevel a) noexcept { return static_cast<int>(a); }
ActionLevel action_from_rank(int r);
std::string_view to_string(ActionLevel a) noexcept;
/// Parses "indeterminate" | "planning" | "implemented".
ActionLevel parse_action(std::string_view s);

enum class Granularity { Aspect, Category };

std::string_view to_string(Granularity g) noexcept;
Granularity parse_granularity(std::string_view s);

struct Label {
    std::string aspect;
    ActionLevel action = ActionLevel::Indeterminate;

    auto operator<=>(const Label&) const = default;
};

/// Aspect -> category mapping. Every aspect belongs to exactly one category.
class Taxonomy {
public:
    Taxonomy() = default;
    explicit Taxonomy(std::map<std::string, std::string> category_of);

    bool contains(std::string_view aspect) const;
    /// Throws InputError for an unknown aspect.
    const std::string& category_of(std::string_view aspect) const;

    std::vector<std::string> aspects() const;
    /// Sorted, de-duplicated image of the mapping.
    const std::vector<std::string>& categories() const noexcept { return categories_; }
    const std::map<std::string, std::string, std::less<>>& mapping() const noexcept { return category_of_; }

    bool operator==(const Taxonomy& other) const { return category_of_ == other.category_of_; }

private:
    std::map<std::string, std::string, std::less<>> category_of_;
    std::vector<std::string> categories_;
};

struct Claim {
    std::string id;
    std::optional<std::string> text;
    std::vector<double> embedding;
    std::vector<Label> labels;

    bool operator==(const Claim&) const = default;
};

struct Corpus {
    std::vector<Claim> claims;
    std::size_t dim = 0;
    Taxonomy taxonomy;

    bool operator==(const Corpus&) const = default;

    /// Position of the claim with the given id; throws InputError if absent.
    std::size_t index_of(std::string_view id) const;
    /// Corpus restricted to the given ids, in the order given.
    Corpus subset(const std::vector<std::string>& ids) const;
    /// Checks the corpus-level invariants (unique ids, dimension, known aspects, no duplicate labels).
    void validate() const;
};

/// Key (aspect or category name) -> action level.
using LabelDict = std::map<std::string, ActionLevel>;

/// Maps a claim's labels onto keys of the requested granularity. When two labels map to the
/// same key the highest-rank action is kept.
LabelDict build_label_dict(const Claim& claim, Granularity granularity, const Taxonomy& taxonomy);

/// The (category, action) tuples of a claim: the unit of prediction and evaluation.
using Tuple = std::pair<std::string, ActionLevel>;
std::set<Tuple> category_tuples(const Claim& claim, const Taxonomy& taxonomy);

/// Splits `ids` into (rest, held_out) with round(fraction * n) held out, both in input order.
std::pair<std::vector<std::string>, std::vector<std::string>> random_holdout(const std::vector<std::string>& ids,
                                                                             double fraction, std::mt19937_64& rng);

struct FoldSplit {
    int fold_id = 0;
    std::vector<std::string> unseen_categories;
    std::vector<std::string> train_ids;
    std::vector<std::string> seen_test_ids;
    std::vector<std::string> unseen_test_ids;

    bool operator==(const FoldSplit&) const = default;
};

/// Fold id used for the standard split over the whole corpus (no unseen categories).
inline constexpr int kFullSplitId = -1;

/// Cross-category folds. Fold k withholds categories [k*u, (k+1)*u) of the sorted category list.
/// Claims touching any withheld category go to unseen test; the rest are split into train and
/// seen test by `test_fraction` with a generator seeded from `seed`.
std::vector<FoldSplit> make_folds(const Corpus& corpus, int n_folds, int unseen_per_fold,
                                  double test_fraction, std::uint64_t seed);

/// Standard random split of the whole corpus.
FoldSplit make_full_split(const Corpus& corpus, double test_fraction, std::uint64_t seed);

struct SyntheticSpec {
    int n_categories = 6;
    int aspects_per_category = 2;
    int n_claims = 600;
    int dim = 32;
    double noise_sigma = 0.1;
    /// Offset along the ordinal direction per action rank.
    double ordinal_step = 0.5;
    /// Fraction of claims carrying a second label from a different category.
    double dual_fraction = 0.2;
    /// Fraction of claims without any label.
    double unlabeled_fraction = 0.0;
};

/// Draws orthonormal category prototypes plus an ordinal direction orthogonal to all of them, then
/// places each claim at normalize(sum of its category prototypes + rank * step * ordinal + noise).
/// Both labels of a dual-category claim share one action level, so the ordinal offset is added once.
Corpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// File formats.

Taxonomy load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const Taxonomy& taxonomy, const std::filesystem::path& path);

/// Reads newline-delimited claim records and validates them against the taxonomy. Errors name
/// the 1-based record number.
Corpus load_corpus(const std::filesystem::path& path, const std::filesystem::path& taxonomy_path);
Corpus parse_corpus(std::string_view ndjson, Taxonomy taxonomy);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

FoldSplit load_fold(const std::filesystem::path& path);
void save_fold(const FoldSplit& fold, const std::filesystem::path& path);

}  // namespace structrep
