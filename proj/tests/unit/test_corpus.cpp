#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "structrep/corpus.hpp"
#include "structrep/error.hpp"
#include "structrep/eval.hpp"
#include "structrep/io.hpp"
#include "structrep/objectives.hpp"

using namespace structrep;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("structrep_corpus_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Taxonomy energy_taxonomy() {
    return Taxonomy({{"solar", "Energy"}, {"wind", "Energy"}, {"emissions", "Climate"}, {"waste", "Circularity"}});
}

Claim claim(std::string id, std::vector<Label> labels, std::size_t dim = 4) {
    Claim c;
    c.id = std::move(id);
    c.embedding.assign(dim, 0.0);
    c.embedding[0] = 1.0;
    c.labels = std::move(labels);
    return c;
}

// Six categories with two aspects each, a handful of claims per category.
Corpus six_category_corpus() {
    std::map<std::string, std::string> mapping;
    for (int c = 1; c <= 6; ++c) {
        mapping["a" + std::to_string(c) + "x"] = "c" + std::to_string(c);
        mapping["a" + std::to_string(c) + "y"] = "c" + std::to_string(c);
    }
    Corpus corpus;
    corpus.taxonomy = Taxonomy(mapping);
    corpus.dim = 4;
    int n = 0;
    for (int c = 1; c <= 6; ++c) {
        for (int k = 0; k < 5; ++k) {
            corpus.claims.push_back(claim("k" + std::to_string(n++), {{"a" + std::to_string(c) + "x", ActionLevel::Planning}}));
        }
    }
    corpus.claims.push_back(claim("mixed", {{"a1x", ActionLevel::Planning}, {"a2y", ActionLevel::Implemented}}));
    corpus.claims.push_back(claim("blank", {}));
    return corpus;
}

}  // namespace

TEST(ActionLevel, OrderAndParsing) {
    EXPECT_LT(rank(ActionLevel::Indeterminate), rank(ActionLevel::Planning));
    EXPECT_LT(rank(ActionLevel::Planning), rank(ActionLevel::Implemented));
    for (int r = 0; r < kActionLevels; ++r) EXPECT_EQ(parse_action(to_string(action_from_rank(r))), action_from_rank(r));
    EXPECT_THROW(parse_action("done"), InputError);
    EXPECT_THROW(action_from_rank(3), InputError);
}

TEST(Taxonomy, CategoriesAreTheSortedImage) {
    const Taxonomy t = energy_taxonomy();
    EXPECT_EQ(t.categories(), (std::vector<std::string>{"Circularity", "Climate", "Energy"}));
    EXPECT_EQ(t.category_of("wind"), "Energy");
    EXPECT_THROW(t.category_of("xyz"), InputError);
}

TEST(LabelDict, AspectGranularitySingleton) {
    const auto d = build_label_dict(claim("c", {{"emissions", ActionLevel::Implemented}}), Granularity::Aspect,
                                    energy_taxonomy());
    EXPECT_EQ(d, (LabelDict{{"emissions", ActionLevel::Implemented}}));
}

TEST(LabelDict, CategoryCollisionKeepsHighestRank) {
    const auto d = build_label_dict(claim("c", {{"solar", ActionLevel::Planning}, {"wind", ActionLevel::Implemented}}),
                                    Granularity::Category, energy_taxonomy());
    EXPECT_EQ(d, (LabelDict{{"Energy", ActionLevel::Implemented}}));
}

TEST(LabelDict, EmptyLabels) {
    EXPECT_TRUE(build_label_dict(claim("c", {}), Granularity::Category, energy_taxonomy()).empty());
}

TEST(LabelDict, KeysStayInsideTheirSpace) {
    const Taxonomy t = energy_taxonomy();
    const Claim c = claim("c", {{"solar", ActionLevel::Planning},
                                {"waste", ActionLevel::Indeterminate},
                                {"emissions", ActionLevel::Implemented}});
    const auto aspects = t.aspects();
    for (const auto& [k, a] : build_label_dict(c, Granularity::Aspect, t)) {
        EXPECT_NE(std::find(aspects.begin(), aspects.end(), k), aspects.end());
    }
    for (const auto& [k, a] : build_label_dict(c, Granularity::Category, t)) {
        EXPECT_NE(std::find(t.categories().begin(), t.categories().end(), k), t.categories().end());
    }
}

TEST(CorpusIo, ThreeRecordsRoundTrip) {
    const auto dir = temp_dir("three");
    save_taxonomy(energy_taxonomy(), dir / "taxonomy.json");
    write_text_file(dir / "claims.ndjson",
                    R"({"id":"a","embedding":[1,0,0,0],"labels":[{"aspect":"solar","action":"planning"}]})"
                    "\n"
                    R"({"id":"b","text":"we recycle","embedding":[0,1,0,0],"labels":[{"aspect":"waste","action":"implemented"}]})"
                    "\n"
                    R"({"id":"c","embedding":[0,0,1,0],"labels":[]})"
                    "\n");
    const Corpus corpus = load_corpus(dir / "claims.ndjson", dir / "taxonomy.json");
    EXPECT_EQ(corpus.claims.size(), 3u);
    EXPECT_EQ(corpus.dim, 4u);
    EXPECT_EQ(corpus.claims[1].text, "we recycle");

    save_corpus(corpus, dir / "again.ndjson");
    EXPECT_EQ(load_corpus(dir / "again.ndjson", dir / "taxonomy.json"), corpus);
}

TEST(CorpusIo, UnknownAspectNamesTheRecord) {
    const auto dir = temp_dir("unknown");
    save_taxonomy(energy_taxonomy(), dir / "taxonomy.json");
    write_text_file(dir / "claims.ndjson",
                    R"({"id":"a","embedding":[1,0],"labels":[]})"
                    "\n"
                    R"({"id":"b","embedding":[0,1],"labels":[{"aspect":"xyz","action":"planning"}]})"
                    "\n");
    try {
        load_corpus(dir / "claims.ndjson", dir / "taxonomy.json");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("xyz"), std::string::npos) << e.what();
    }
}

TEST(CorpusIo, EmptyFileIsAnEmptyCorpus) {
    const auto dir = temp_dir("empty");
    save_taxonomy(energy_taxonomy(), dir / "taxonomy.json");
    write_text_file(dir / "claims.ndjson", "");
    EXPECT_TRUE(load_corpus(dir / "claims.ndjson", dir / "taxonomy.json").claims.empty());
}

TEST(CorpusIo, RejectsDimensionMismatchAndDuplicates) {
    const Taxonomy t = energy_taxonomy();
    EXPECT_THROW(parse_corpus(R"({"id":"a","embedding":[1,0],"labels":[]})"
                              "\n"
                              R"({"id":"b","embedding":[1,0,0],"labels":[]})",
                              t),
                 InputError);
    EXPECT_THROW(parse_corpus(R"({"id":"a","embedding":[1,0],"labels":[]})"
                              "\n"
                              R"({"id":"a","embedding":[1,0],"labels":[]})",
                              t),
                 InputError);
    EXPECT_THROW(parse_corpus("{not json", t), InputError);
}

TEST(Folds, SixCategoriesThreeFoldsDisjointPairs) {
    const Corpus corpus = six_category_corpus();
    const auto folds = make_folds(corpus, 3, 2, 0.2, 7);
    ASSERT_EQ(folds.size(), 3u);
    EXPECT_EQ(folds[0].unseen_categories, (std::vector<std::string>{"c1", "c2"}));
    EXPECT_EQ(folds[1].unseen_categories, (std::vector<std::string>{"c3", "c4"}));
    EXPECT_EQ(folds[2].unseen_categories, (std::vector<std::string>{"c5", "c6"}));
}

TEST(Folds, LeakageRuleAndDisjointness) {
    const Corpus corpus = six_category_corpus();
    for (const auto& fold : make_folds(corpus, 3, 2, 0.2, 11)) {
        const std::set<std::string> unseen(fold.unseen_categories.begin(), fold.unseen_categories.end());
        const std::set<std::string> train(fold.train_ids.begin(), fold.train_ids.end());
        for (const auto& id : fold.seen_test_ids) EXPECT_FALSE(train.count(id));
        for (const auto& id : fold.unseen_test_ids) EXPECT_FALSE(train.count(id));
        for (const auto& id : fold.train_ids) {
            for (const auto& l : corpus.claims[corpus.index_of(id)].labels) {
                EXPECT_FALSE(unseen.count(corpus.taxonomy.category_of(l.aspect))) << id;
            }
        }
        // one seen category plus one unseen category puts the claim in unseen test
        if (unseen.count("c1") || unseen.count("c2")) {
            EXPECT_NE(std::find(fold.unseen_test_ids.begin(), fold.unseen_test_ids.end(), "mixed"),
                      fold.unseen_test_ids.end());
        }
        EXPECT_EQ(fold.train_ids.size() + fold.seen_test_ids.size() + fold.unseen_test_ids.size(),
                  corpus.claims.size());
    }
}

TEST(Folds, SeenPlusUnseenClaimGoesToUnseenOnFiveClaims) {
    Corpus corpus;
    corpus.taxonomy = Taxonomy({{"p", "P"}, {"q", "Q"}, {"r", "R"}});
    corpus.dim = 4;
    corpus.claims = {claim("1", {{"p", ActionLevel::Planning}}), claim("2", {{"q", ActionLevel::Planning}}),
                     claim("3", {{"p", ActionLevel::Planning}, {"q", ActionLevel::Implemented}}),
                     claim("4", {{"r", ActionLevel::Indeterminate}}), claim("5", {})};
    // sorted categories P, Q, R: fold 0 withholds P
    const auto folds = make_folds(corpus, 1, 1, 0.5, 3);
    ASSERT_EQ(folds.size(), 1u);
    EXPECT_EQ(folds[0].unseen_categories, std::vector<std::string>{"P"});
    EXPECT_EQ(folds[0].unseen_test_ids, (std::vector<std::string>{"1", "3"}));
    std::vector<std::string> rest = folds[0].train_ids;
    rest.insert(rest.end(), folds[0].seen_test_ids.begin(), folds[0].seen_test_ids.end());
    std::sort(rest.begin(), rest.end());
    EXPECT_EQ(rest, (std::vector<std::string>{"2", "4", "5"}));
}

TEST(Folds, DeterministicGivenSeed) {
    const Corpus corpus = six_category_corpus();
    EXPECT_EQ(make_folds(corpus, 3, 2, 0.2, 5), make_folds(corpus, 3, 2, 0.2, 5));
}

TEST(Folds, Errors) {
    const Corpus corpus = six_category_corpus();
    EXPECT_THROW(make_folds(corpus, 4, 2, 0.2, 1), InputError);
    EXPECT_THROW(make_folds(corpus, 3, 2, 1.5, 1), InputError);
}

TEST(FullSplit, CoversEveryClaimOnce) {
    const Corpus corpus = six_category_corpus();
    const FoldSplit full = make_full_split(corpus, 0.2, 9);
    EXPECT_EQ(full.fold_id, kFullSplitId);
    EXPECT_TRUE(full.unseen_test_ids.empty());
    EXPECT_EQ(full.train_ids.size() + full.seen_test_ids.size(), corpus.claims.size());
}

TEST(Synthetic, ZeroNoiseLiesOnTheLattice) {
    SyntheticSpec spec;
    spec.n_categories = 2;
    spec.aspects_per_category = 1;
    spec.n_claims = 10;
    spec.dim = 8;
    spec.noise_sigma = 0.0;
    spec.dual_fraction = 0.0;
    const Corpus corpus = generate_synthetic(spec, 4);
    ASSERT_EQ(corpus.claims.size(), 10u);
    // claims with equal (category, action) coincide exactly; every embedding is unit norm
    std::map<std::pair<std::string, int>, std::vector<double>> seen;
    for (const auto& c : corpus.claims) {
        EXPECT_NEAR(l2_norm(c.embedding), 1.0, 1e-12);
        ASSERT_EQ(c.labels.size(), 1u);
        const auto key = std::make_pair(corpus.taxonomy.category_of(c.labels[0].aspect), rank(c.labels[0].action));
        auto [it, fresh] = seen.emplace(key, c.embedding);
        if (!fresh) {
            for (std::size_t j = 0; j < c.embedding.size(); ++j) EXPECT_NEAR(it->second[j], c.embedding[j], 1e-12);
        }
    }
}

TEST(Synthetic, SameSeedIdenticalBytes) {
    SyntheticSpec spec;
    spec.n_claims = 50;
    EXPECT_EQ(serialize_corpus(generate_synthetic(spec, 3)), serialize_corpus(generate_synthetic(spec, 3)));
    EXPECT_NE(serialize_corpus(generate_synthetic(spec, 3)), serialize_corpus(generate_synthetic(spec, 4)));
}

TEST(Synthetic, LargeNoiseDestroysCategoryClusters) {
    SyntheticSpec spec;
    spec.n_claims = 300;
    spec.noise_sigma = 10.0;
    const Corpus corpus = generate_synthetic(spec, 2);
    Matrix x(corpus.claims.size(), corpus.dim);
    for (std::size_t i = 0; i < corpus.claims.size(); ++i) {
        std::copy(corpus.claims[i].embedding.begin(), corpus.claims[i].embedding.end(), x.row(i).begin());
    }
    EXPECT_LT(silhouette(x, cluster_labels(corpus)), 0.05);
}

TEST(Synthetic, DualClaimsSpanTwoCategories) {
    SyntheticSpec spec;
    spec.n_claims = 200;
    spec.dual_fraction = 0.2;
    const Corpus corpus = generate_synthetic(spec, 8);
    int duals = 0;
    for (const auto& c : corpus.claims) {
        if (c.labels.size() == 2) {
            ++duals;
            EXPECT_NE(corpus.taxonomy.category_of(c.labels[0].aspect), corpus.taxonomy.category_of(c.labels[1].aspect));
            EXPECT_EQ(c.labels[0].action, c.labels[1].action);
        }
    }
    EXPECT_GT(duals, 20);
    EXPECT_LT(duals, 60);
    corpus.validate();
}

TEST(Synthetic, RejectsTooSmallDimension) {
    SyntheticSpec spec;
    spec.n_categories = 6;
    spec.dim = 6;
    EXPECT_THROW(generate_synthetic(spec, 1), InputError);
}
