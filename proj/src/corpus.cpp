#include "structrep/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "structrep/error.hpp"
#include "structrep/random.hpp"

namespace structrep {

ActionLevel action_from_rank(int r) {
    if (r < 0 || r >= kActionLevels) {
        throw InputError("action rank out of range: " + std::to_string(r));
    }
    return static_cast<ActionLevel>(r);
}

std::string_view to_string(ActionLevel a) noexcept {
    switch (a) {
        case ActionLevel::Indeterminate: return "indeterminate";
        case ActionLevel::Planning: return "planning";
        case ActionLevel::Implemented: return "implemented";
    }
    return "indeterminate";
}

ActionLevel parse_action(std::string_view s) {
    if (s == "indeterminate") return ActionLevel::Indeterminate;
    if (s == "planning") return ActionLevel::Planning;
    if (s == "implemented") return ActionLevel::Implemented;
    throw InputError("unknown action level '" + std::string(s) + "'");
}

std::string_view to_string(Granularity g) noexcept {
    return g == Granularity::Aspect ? "aspect" : "category";
}

Granularity parse_granularity(std::string_view s) {
    if (s == "aspect") return Granularity::Aspect;
    if (s == "category") return Granularity::Category;
    throw InputError("unknown granularity '" + std::string(s) + "' (expected aspect|category)");
}

Taxonomy::Taxonomy(std::map<std::string, std::string> category_of) {
    for (auto& [aspect, category] : category_of) {
        if (aspect.empty() || category.empty()) {
            throw InputError("taxonomy entries must be non-empty strings");
        }
        category_of_.emplace(aspect, category);
        categories_.push_back(category);
    }
    std::sort(categories_.begin(), categories_.end());
    categories_.erase(std::unique(categories_.begin(), categories_.end()), categories_.end());
}

bool Taxonomy::contains(std::string_view aspect) const {
    return category_of_.find(aspect) != category_of_.end();
}

const std::string& Taxonomy::category_of(std::string_view aspect) const {
    auto it = category_of_.find(aspect);
    if (it == category_of_.end()) {
        throw InputError("unknown aspect '" + std::string(aspect) + "'");
    }
    return it->second;
}

std::vector<std::string> Taxonomy::aspects() const {
    std::vector<std::string> out;
    out.reserve(category_of_.size());
    for (const auto& [aspect, _] : category_of_) out.push_back(aspect);
    return out;
}

std::size_t Corpus::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < claims.size(); ++i) {
        if (claims[i].id == id) return i;
    }
    throw InputError("unknown claim id '" + std::string(id) + "'");
}

Corpus Corpus::subset(const std::vector<std::string>& ids) const {
    std::unordered_map<std::string_view, std::size_t> position;
    position.reserve(claims.size());
    for (std::size_t i = 0; i < claims.size(); ++i) position.emplace(claims[i].id, i);

    Corpus out;
    out.dim = dim;
    out.taxonomy = taxonomy;
    out.claims.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = position.find(id);
        if (it == position.end()) throw InputError("unknown claim id '" + id + "'");
        out.claims.push_back(claims[it->second]);
    }
    return out;
}

namespace {

void validate_claim(const Claim& claim, std::size_t dim, const Taxonomy& taxonomy, std::size_t record) {
    const auto where = [&] { return "record " + std::to_string(record) + ": "; };
    if (claim.id.empty()) throw InputError(where() + "empty id");
    if (claim.embedding.size() != dim) {
        throw InputError(where() + "embedding dimension " + std::to_string(claim.embedding.size()) +
                         " does not match corpus dimension " + std::to_string(dim));
    }
    for (double v : claim.embedding) {
        if (!std::isfinite(v)) throw InputError(where() + "non-finite embedding value");
    }
    std::set<Label> seen;
    for (const auto& label : claim.labels) {
        if (!taxonomy.contains(label.aspect)) {
            throw InputError(where() + "unknown aspect '" + label.aspect + "'");
        }
        if (!seen.insert(label).second) {
            throw InputError(where() + "duplicate label (" + label.aspect + ", " +
                             std::string(to_string(label.action)) + ")");
        }
    }
}

}  // namespace

void Corpus::validate() const {
    std::unordered_set<std::string_view> ids;
    for (std::size_t i = 0; i < claims.size(); ++i) {
        validate_claim(claims[i], dim, taxonomy, i + 1);
        if (!ids.insert(claims[i].id).second) {
            throw InputError("record " + std::to_string(i + 1) + ": duplicate id '" + claims[i].id + "'");
        }
    }
}

LabelDict build_label_dict(const Claim& claim, Granularity granularity, const Taxonomy& taxonomy) {
    LabelDict dict;
    for (const auto& label : claim.labels) {
        const std::string& key =
            granularity == Granularity::Aspect ? label.aspect : taxonomy.category_of(label.aspect);
        auto [it, inserted] = dict.emplace(key, label.action);
        if (!inserted && rank(label.action) > rank(it->second)) it->second = label.action;
    }
    return dict;
}

std::set<Tuple> category_tuples(const Claim& claim, const Taxonomy& taxonomy) {
    std::set<Tuple> out;
    for (const auto& label : claim.labels) out.emplace(taxonomy.category_of(label.aspect), label.action);
    return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> random_holdout(const std::vector<std::string>& ids,
                                                                             double fraction, Rng& rng) {
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    std::vector<bool> held(ids.size(), false);
    for (std::size_t i = 0; i < n_held && i < order.size(); ++i) held[order[i]] = true;

    std::pair<std::vector<std::string>, std::vector<std::string>> out;
    for (std::size_t i = 0; i < ids.size(); ++i) (held[i] ? out.second : out.first).push_back(ids[i]);
    return out;
}

std::vector<FoldSplit> make_folds(const Corpus& corpus, int n_folds, int unseen_per_fold, double test_fraction,
                                  std::uint64_t seed) {
    if (n_folds < 1 || unseen_per_fold < 1) throw InputError("n_folds and unseen_per_fold must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("test_fraction must lie in (0, 1)");
    const auto& categories = corpus.taxonomy.categories();
    if (static_cast<std::size_t>(n_folds) * static_cast<std::size_t>(unseen_per_fold) > categories.size()) {
        throw InputError("too few categories: " + std::to_string(categories.size()) + " available, " +
                         std::to_string(n_folds * unseen_per_fold) + " required");
    }

    std::vector<FoldSplit> folds;
    for (int f = 0; f < n_folds; ++f) {
        FoldSplit fold;
        fold.fold_id = f;
        const auto first = categories.begin() + static_cast<std::ptrdiff_t>(f) * unseen_per_fold;
        fold.unseen_categories.assign(first, first + unseen_per_fold);
        const std::set<std::string> unseen(fold.unseen_categories.begin(), fold.unseen_categories.end());

        std::vector<std::string> remaining;
        for (const auto& claim : corpus.claims) {
            const bool touches_unseen = std::any_of(claim.labels.begin(), claim.labels.end(), [&](const Label& l) {
                return unseen.count(corpus.taxonomy.category_of(l.aspect)) > 0;
            });
            (touches_unseen ? fold.unseen_test_ids : remaining).push_back(claim.id);
        }
        auto rng = make_rng(seed, "fold-split", static_cast<std::uint64_t>(f));
        auto [train, seen_test] = random_holdout(remaining, test_fraction, rng);
        if (train.empty()) {
            throw InputError("fold " + std::to_string(f) + ": empty train set after excluding unseen categories");
        }
        fold.train_ids = std::move(train);
        fold.seen_test_ids = std::move(seen_test);
        folds.push_back(std::move(fold));
    }
    return folds;
}

FoldSplit make_full_split(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("test_fraction must lie in (0, 1)");
    std::vector<std::string> ids;
    ids.reserve(corpus.claims.size());
    for (const auto& claim : corpus.claims) ids.push_back(claim.id);
    auto rng = make_rng(seed, "full-split");
    auto [train, test] = random_holdout(ids, test_fraction, rng);
    if (train.empty()) throw InputError("empty train set");
    FoldSplit fold;
    fold.fold_id = kFullSplitId;
    fold.train_ids = std::move(train);
    fold.seen_test_ids = std::move(test);
    return fold;
}

namespace {

std::vector<double> gaussian_vector(std::size_t dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    return v;
}

// Gram-Schmidt: returns `count` orthonormal vectors drawn from isotropic Gaussians.
std::vector<std::vector<double>> orthonormal_set(std::size_t count, std::size_t dim, Rng& rng) {
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        auto v = gaussian_vector(dim, rng);
        for (const auto& b : basis) {
            double proj = 0.0;
            for (std::size_t i = 0; i < dim; ++i) proj += v[i] * b[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (auto& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.n_categories < 2) throw InputError("synthetic spec: n_categories must be >= 2");
    if (spec.aspects_per_category < 1) throw InputError("synthetic spec: aspects_per_category must be >= 1");
    if (spec.n_claims < 1) throw InputError("synthetic spec: n_claims must be >= 1");
    if (spec.dim < 4) throw InputError("synthetic spec: dim must be >= 4");
    if (!(spec.noise_sigma >= 0.0)) throw InputError("synthetic spec: noise_sigma must be >= 0");
    if (!(spec.dual_fraction >= 0.0 && spec.dual_fraction <= 1.0) ||
        !(spec.unlabeled_fraction >= 0.0 && spec.unlabeled_fraction <= 1.0)) {
        throw InputError("synthetic spec: fractions must lie in [0, 1]");
    }
    if (spec.dim < spec.n_categories + 1) {
        throw InputError("synthetic spec: dim " + std::to_string(spec.dim) + " too small to orthogonalize " +
                         std::to_string(spec.n_categories) + " prototypes and an ordinal direction");
    }

    const auto dim = static_cast<std::size_t>(spec.dim);
    auto geometry_rng = make_rng(seed, "synthetic-geometry");
    auto basis = orthonormal_set(static_cast<std::size_t>(spec.n_categories) + 1, dim, geometry_rng);
    const auto& ordinal_direction = basis.back();

    std::map<std::string, std::string> mapping;
    std::vector<std::string> category_names;
    std::vector<std::vector<std::string>> aspect_names(static_cast<std::size_t>(spec.n_categories));
    const int width = spec.n_categories > 10 ? 2 : 1;
    for (int c = 0; c < spec.n_categories; ++c) {
        auto pad = [&](int v) {
            auto s = std::to_string(v);
            return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
        };
        category_names.push_back("category_" + pad(c));
        for (int a = 0; a < spec.aspects_per_category; ++a) {
            auto name = "aspect_" + pad(c) + "_" + std::to_string(a);
            mapping.emplace(name, category_names.back());
            aspect_names[static_cast<std::size_t>(c)].push_back(std::move(name));
        }
    }

    Corpus corpus;
    corpus.dim = dim;
    corpus.taxonomy = Taxonomy(std::move(mapping));

    auto rng = make_rng(seed, "synthetic-claims");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> pick_category(0, spec.n_categories - 1);
    std::uniform_int_distribution<int> pick_aspect(0, spec.aspects_per_category - 1);
    std::uniform_int_distribution<int> pick_action(0, kActionLevels - 1);
    std::normal_distribution<double> noise(0.0, 1.0);

    const int id_width = static_cast<int>(std::to_string(spec.n_claims - 1).size());
    for (int i = 0; i < spec.n_claims; ++i) {
        Claim claim;
        auto number = std::to_string(i);
        claim.id = "claim_" + std::string(static_cast<std::size_t>(id_width) - number.size(), '0') + number;

        std::vector<double> v(dim, 0.0);
        const bool unlabeled = unit(rng) < spec.unlabeled_fraction;
        if (!unlabeled) {
            const int action = pick_action(rng);
            std::vector<int> categories{pick_category(rng)};
            if (unit(rng) < spec.dual_fraction) {
                int second = pick_category(rng);
                while (second == categories.front()) second = pick_category(rng);
                categories.push_back(second);
            }
            for (int c : categories) {
                const auto& aspects = aspect_names[static_cast<std::size_t>(c)];
                claim.labels.push_back(Label{aspects[static_cast<std::size_t>(pick_aspect(rng))], action_from_rank(action)});
                const auto& prototype = basis[static_cast<std::size_t>(c)];
                for (std::size_t k = 0; k < dim; ++k) v[k] += prototype[k];
            }
            for (std::size_t k = 0; k < dim; ++k) v[k] += action * spec.ordinal_step * ordinal_direction[k];
        }
        for (auto& x : v) x += spec.noise_sigma * noise(rng);

        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm <= 1e-12) {
            // Only reachable for an unlabeled claim with zero noise.
            v = gaussian_vector(dim, rng);
            norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
        }
        for (auto& x : v) x /= norm;
        claim.embedding = std::move(v);
        corpus.claims.push_back(std::move(claim));
    }
    return corpus;
}

}  // namespace structrep
