#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "structrep/corpus.hpp"
#include "structrep/random.hpp"

namespace structrep {

/// Ordinal transition: which action level counts as a positive relative to an anchor's level.
/// Implemented -> Planning, Planning -> Implemented, Indeterminate -> Planning.
ActionLevel transition(ActionLevel a) noexcept;

enum class PairKind { Contrastive, Ordinal };

std::string_view to_string(PairKind k) noexcept;

/// Positive and negative candidates of one anchor. Indices refer to positions in the pool
/// corpus the sets were built from, in ascending order.
struct PairSets {
    std::size_t anchor = 0;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
    PairKind kind = PairKind::Contrastive;
    Granularity granularity = Granularity::Aspect;

    bool operator==(const PairSets&) const = default;
};

/// Contrastive sets: j is positive iff the anchor and j share at least one (key, action) label
/// after mapping aspects to keys of the given granularity. Throws InputError for an unlabeled
/// anchor.
PairSets contrastive_pairs(const Corpus& pool, std::size_t anchor, Granularity granularity);

/// Ordinal sets: j is positive iff some shared key k has d_j(k) == transition(d_anchor(k)).
/// Candidates without shared keys are negatives. Throws InputError for an unlabeled anchor.
PairSets ordinal_pairs(const Corpus& pool, std::size_t anchor, Granularity granularity);

/// Overloads for an anchor claim that may or may not belong to the pool; a pool member with the
/// anchor's id is excluded. `anchor` of the result is the pool index of that member, or
/// pool.claims.size() when the anchor is external.
PairSets contrastive_pairs(const Claim& anchor, const Corpus& pool, Granularity granularity);
PairSets ordinal_pairs(const Claim& anchor, const Corpus& pool, Granularity granularity);

struct SampledPairs {
    std::size_t anchor = 0;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;

    bool operator==(const SampledPairs&) const = default;
};

/// Uniform sampling without replacement of at most k_max positives and m_max negatives.
/// Returns nullopt (anchor skipped) when the anchor has no positives.
std::optional<SampledPairs> sample_pairs(const PairSets& sets, std::size_t k_max, std::size_t m_max,
                                         Rng& rng);

/// Per-anchor pair sets of both kinds for one pool and granularity. Unlabeled anchors have no
/// entry (std::nullopt).
struct PairCache {
    Granularity granularity = Granularity::Aspect;
    std::uint64_t pool_hash = 0;
    std::vector<std::optional<PairSets>> contrastive;
    std::vector<std::optional<PairSets>> ordinal;

    /// True when the cache was built for exactly this pool (same ids, same order) and granularity.
    bool matches(const Corpus& pool, Granularity g) const;
    bool operator==(const PairCache&) const = default;
};

std::uint64_t pool_hash(const Corpus& pool);

/// Builds every anchor's pair sets in one pass over precomputed label dictionaries. Anchors are
/// distributed over `threads` workers; results are written by anchor index so the cache does
/// not depend on the thread count.
PairCache build_pair_cache(const Corpus& pool, Granularity granularity, unsigned threads = 1);

/// Debug dump: per anchor, the positive and negative ids of both kinds.
std::string dump_pair_cache(const PairCache& cache, const Corpus& pool);
void save_pair_cache(const PairCache& cache, const Corpus& pool, const std::filesystem::path& path);

}  // namespace structrep
