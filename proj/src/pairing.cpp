#include "structrep/pairing.hpp"

#include <algorithm>
#include <map>
#include <thread>

#include "json.hpp"
#include "structrep/error.hpp"
#include "structrep/io.hpp"

namespace structrep {

ActionLevel transition(ActionLevel a) noexcept {
    switch (a) {
        case ActionLevel::Implemented: return ActionLevel::Planning;
        case ActionLevel::Planning: return ActionLevel::Implemented;
        case ActionLevel::Indeterminate: return ActionLevel::Planning;
    }
    return ActionLevel::Planning;
}

std::string_view to_string(PairKind k) noexcept {
    return k == PairKind::Contrastive ? "contrastive" : "ordinal";
}

namespace {

using KeyedLabel = std::pair<int, int>;  // (key id, action rank)

// Label tuples and label dictionary of one claim with keys interned as integers. Both vectors
// are sorted by key.
struct KeyedClaim {
    std::vector<KeyedLabel> tuples;
    std::vector<KeyedLabel> dict;
    bool labeled() const noexcept { return !tuples.empty(); }
};

class KeyInterner {
public:
    int operator()(const std::string& key) {
        auto [it, _] = ids_.emplace(key, static_cast<int>(ids_.size()));
        return it->second;
    }

private:
    std::map<std::string, int> ids_;
};

KeyedClaim key_claim(const Claim& claim, Granularity granularity, const Taxonomy& taxonomy, KeyInterner& intern) {
    KeyedClaim out;
    for (const auto& label : claim.labels) {
        const std::string& key =
            granularity == Granularity::Aspect ? label.aspect : taxonomy.category_of(label.aspect);
        out.tuples.emplace_back(intern(key), rank(label.action));
    }
    std::sort(out.tuples.begin(), out.tuples.end());
    out.tuples.erase(std::unique(out.tuples.begin(), out.tuples.end()), out.tuples.end());
    for (const auto& [key, action] : build_label_dict(claim, granularity, taxonomy)) {
        out.dict.emplace_back(intern(key), rank(action));
    }
    std::sort(out.dict.begin(), out.dict.end());
    return out;
}

bool shares_tuple(const KeyedClaim& a, const KeyedClaim& b) {
    auto i = a.tuples.begin();
    auto j = b.tuples.begin();
    while (i != a.tuples.end() && j != b.tuples.end()) {
        if (*i == *j) return true;
        if (*i < *j) ++i; else ++j;
    }
    return false;
}

bool is_ordinal_positive(const KeyedClaim& anchor, const KeyedClaim& candidate) {
    auto i = anchor.dict.begin();
    auto j = candidate.dict.begin();
    while (i != anchor.dict.end() && j != candidate.dict.end()) {
        if (i->first == j->first) {
            if (j->second == rank(transition(action_from_rank(i->second)))) return true;
            ++i;
            ++j;
        } else if (i->first < j->first) {
            ++i;
        } else {
            ++j;
        }
    }
    return false;
}

PairSets partition(const std::vector<KeyedClaim>& keyed, const KeyedClaim& anchor, std::size_t anchor_index,
                   PairKind kind, Granularity granularity) {
    PairSets sets;
    sets.anchor = anchor_index;
    sets.kind = kind;
    sets.granularity = granularity;
    for (std::size_t j = 0; j < keyed.size(); ++j) {
        if (j == anchor_index) continue;
        const bool positive =
            kind == PairKind::Contrastive ? shares_tuple(anchor, keyed[j]) : is_ordinal_positive(anchor, keyed[j]);
        (positive ? sets.positives : sets.negatives).push_back(j);
    }
    return sets;
}

std::vector<KeyedClaim> key_pool(const Corpus& pool, Granularity granularity, KeyInterner& intern) {
    std::vector<KeyedClaim> keyed;
    keyed.reserve(pool.claims.size());
    for (const auto& claim : pool.claims) keyed.push_back(key_claim(claim, granularity, pool.taxonomy, intern));
    return keyed;
}

PairSets pairs_for_index(const Corpus& pool, std::size_t anchor, Granularity granularity, PairKind kind) {
    if (anchor >= pool.claims.size()) throw InputError("anchor index out of range");
    if (pool.claims[anchor].labels.empty()) {
        throw InputError("anchor '" + pool.claims[anchor].id + "' has no labels");
    }
    KeyInterner intern;
    const auto keyed = key_pool(pool, granularity, intern);
    return partition(keyed, keyed[anchor], anchor, kind, granularity);
}

PairSets pairs_for_claim(const Claim& anchor, const Corpus& pool, Granularity granularity, PairKind kind) {
    if (anchor.labels.empty()) throw InputError("anchor '" + anchor.id + "' has no labels");
    KeyInterner intern;
    const auto keyed = key_pool(pool, granularity, intern);
    const auto keyed_anchor = key_claim(anchor, granularity, pool.taxonomy, intern);
    std::size_t self = pool.claims.size();
    for (std::size_t j = 0; j < pool.claims.size(); ++j) {
        if (pool.claims[j].id == anchor.id) {
            self = j;
            break;
        }
    }
    return partition(keyed, keyed_anchor, self, kind, granularity);
}

}  // namespace

PairSets contrastive_pairs(const Corpus& pool, std::size_t anchor, Granularity granularity) {
    return pairs_for_index(pool, anchor, granularity, PairKind::Contrastive);
}

PairSets ordinal_pairs(const Corpus& pool, std::size_t anchor, Granularity granularity) {
    return pairs_for_index(pool, anchor, granularity, PairKind::Ordinal);
}

PairSets contrastive_pairs(const Claim& anchor, const Corpus& pool, Granularity granularity) {
    return pairs_for_claim(anchor, pool, granularity, PairKind::Contrastive);
}

PairSets ordinal_pairs(const Claim& anchor, const Corpus& pool, Granularity granularity) {
    return pairs_for_claim(anchor, pool, granularity, PairKind::Ordinal);
}

namespace {

// Partial Fisher-Yates: the first min(cap, n) entries of a uniform random permutation.
std::vector<std::size_t> draw_without_replacement(const std::vector<std::size_t>& items, std::size_t cap, Rng& rng) {
    std::vector<std::size_t> pool = items;
    const std::size_t take = std::min(cap, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(take);
    return pool;
}

}  // namespace

std::optional<SampledPairs> sample_pairs(const PairSets& sets, std::size_t k_max, std::size_t m_max, Rng& rng) {
    if (k_max < 1 || m_max < 1) throw InputError("sampling caps must be >= 1");
    if (sets.positives.empty()) return std::nullopt;
    SampledPairs out;
    out.anchor = sets.anchor;
    out.positives = draw_without_replacement(sets.positives, k_max, rng);
    out.negatives = draw_without_replacement(sets.negatives, m_max, rng);
    return out;
}

std::uint64_t pool_hash(const Corpus& pool) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& claim : pool.claims) {
        for (char c : claim.id) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        h ^= 0xffU;  // id separator
        h *= 1099511628211ULL;
    }
    return h;
}

bool PairCache::matches(const Corpus& pool, Granularity g) const {
    return g == granularity && contrastive.size() == pool.claims.size() && pool_hash == structrep::pool_hash(pool);
}

PairCache build_pair_cache(const Corpus& pool, Granularity granularity, unsigned threads) {
    KeyInterner intern;
    const auto keyed = key_pool(pool, granularity, intern);
    const std::size_t n = keyed.size();

    PairCache cache;
    cache.granularity = granularity;
    cache.pool_hash = pool_hash(pool);
    cache.contrastive.resize(n);
    cache.ordinal.resize(n);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            if (!keyed[i].labeled()) continue;
            cache.contrastive[i] = partition(keyed, keyed[i], i, PairKind::Contrastive, granularity);
            cache.ordinal[i] = partition(keyed, keyed[i], i, PairKind::Ordinal, granularity);
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
    if (workers <= 1) {
        work(0, n);
        return cache;
    }
    std::vector<std::thread> pool_threads;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool_threads.emplace_back(work, begin, end);
    }
    for (auto& t : pool_threads) t.join();
    return cache;
}

std::string dump_pair_cache(const PairCache& cache, const Corpus& pool) {
    using ordered_json = nlohmann::ordered_json;
    auto ids = [&](const std::vector<std::size_t>& indices) {
        ordered_json arr = ordered_json::array();
        for (auto i : indices) arr.push_back(pool.claims[i].id);
        return arr;
    };
    ordered_json doc;
    doc["granularity"] = std::string(to_string(cache.granularity));
    doc["anchors"] = ordered_json::array();
    for (std::size_t i = 0; i < cache.contrastive.size(); ++i) {
        if (!cache.contrastive[i]) continue;
        ordered_json entry;
        entry["id"] = pool.claims[i].id;
        entry["contrastive"] = {{"positives", ids(cache.contrastive[i]->positives)},
                                {"negatives", ids(cache.contrastive[i]->negatives)}};
        entry["ordinal"] = {{"positives", ids(cache.ordinal[i]->positives)},
                            {"negatives", ids(cache.ordinal[i]->negatives)}};
        doc["anchors"].push_back(std::move(entry));
    }
    return doc.dump(2) + "\n";
}

void save_pair_cache(const PairCache& cache, const Corpus& pool, const std::filesystem::path& path) {
    write_text_file(path, dump_pair_cache(cache, pool));
}

}  // namespace structrep
