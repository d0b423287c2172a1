#include <gtest/gtest.h>

#include <filesystem>

#include "cli.hpp"
#include "json.hpp"
#include "structrep/checkpoint.hpp"
#include "structrep/corpus.hpp"
#include "structrep/eval.hpp"
#include "structrep/io.hpp"

using namespace structrep;
namespace fs = std::filesystem;

namespace {

const fs::path kData = STRUCTREP_TEST_DATA_DIR;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("structrep_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    static int run(std::vector<std::string> args) {
        args.insert(args.begin(), "structrep");
        return tools::run(args);
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // Small synthetic corpus shared by the train and eval tests.
    void synth_small() {
        ASSERT_EQ(run({"synth", "--out", path("data"), "--n-claims", "90", "--dim", "16", "--seed", "3"}), 0);
    }

    std::vector<std::string> quick_train(const std::string& out, const std::string& fold,
                                         const std::string& flags = "flags=[\"contrastive_only\",\"add_ordinal\",\"add_gating\","
                                                                    "\"add_lambdas\",\"add_metagradnorm\"]") const {
        std::vector<std::string> a{"train", "--corpus", path("data/corpus.ndjson"), "--taxonomy",
                                   path("data/taxonomy.json"), "--out", path(out),
                                   "--set", "rank=4", "--set", "stage1_epochs=1", "--set", "stage2_epochs=2",
                                   "--set", "eta_ft=0.5", "--set", flags};
        if (fold == "full") {
            a.push_back("--full");
        } else {
            a.push_back("--fold");
            a.push_back(fold);
        }
        return a;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthWritesLoadableDeterministicFiles) {
    ASSERT_EQ(run({"synth", "--out", path("a"), "--n-claims", "50", "--dim", "16"}), 0);
    ASSERT_EQ(run({"synth", "--out", path("b"), "--n-claims", "50", "--dim", "16"}), 0);
    const Corpus c = load_corpus(path("a/corpus.ndjson"), path("a/taxonomy.json"));
    EXPECT_EQ(c.claims.size(), 50u);
    EXPECT_EQ(c.dim, 16u);
    EXPECT_EQ(read_text_file(path("a/corpus.ndjson")), read_text_file(path("b/corpus.ndjson")));
    EXPECT_EQ(read_text_file(path("a/taxonomy.json")), read_text_file(path("b/taxonomy.json")));

    // six categories plus the ordinal direction do not fit in six dimensions
    EXPECT_EQ(run({"synth", "--out", path("c"), "--dim", "6"}), 1);
}

TEST_F(Cli, PairsMatchTheHandEnumeratedDump) {
    for (const std::string g : {"aspect", "category"}) {
        const std::string out = path("pairs_" + g + ".json");
        ASSERT_EQ(run({"pairs", "--corpus", (kData / "toy_claims.ndjson").string(), "--taxonomy",
                       (kData / "toy_taxonomy.json").string(), "--granularity", g, "--out", out}),
                  0);
        const auto got = nlohmann::json::parse(read_text_file(out));
        const auto want = nlohmann::json::parse(read_text_file(kData / ("toy_pairs_" + g + ".json")));
        EXPECT_EQ(got, want) << g << "\n" << got.dump(1);
    }
}

TEST_F(Cli, PairsEdgeCases) {
    const std::string out = path("empty.json");
    ASSERT_EQ(run({"pairs", "--corpus", (kData / "empty_claims.ndjson").string(), "--taxonomy",
                   (kData / "toy_taxonomy.json").string(), "--out", out}),
              0);
    EXPECT_TRUE(nlohmann::json::parse(read_text_file(out))["anchors"].empty());
    EXPECT_EQ(run({"pairs", "--corpus", (kData / "toy_claims.ndjson").string(), "--taxonomy",
                   (kData / "toy_taxonomy.json").string(), "--granularity", "sentence", "--out", out}),
              1);
}

TEST_F(Cli, GradcheckPassesAndValidatesTrials) {
    EXPECT_EQ(run({"gradcheck", "--trials", "20", "--worst", path("worst.json")}), 0);
    EXPECT_FALSE(fs::exists(path("worst.json")));
    EXPECT_EQ(run({"gradcheck", "--trials", "0"}), 1);
}

TEST_F(Cli, TrainWritesAllOutputs) {
    synth_small();
    ASSERT_EQ(run(quick_train("run", "0", "flags=[]")), 0);
    for (const char* f : {"checkpoint.bin", "runlog.ndjson", "fold.json", "config.json", "fold_report.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
    }
    const Checkpoint c = checkpoint_load(dir_ / "run/checkpoint.bin");
    EXPECT_EQ(c.fold_id, 0);
    EXPECT_TRUE(c.head.has_value());
    EXPECT_FALSE(c.meta.has_value());
    const auto report = nlohmann::json::parse(read_text_file(dir_ / "run/fold_report.json"));
    EXPECT_TRUE(report["flags"].empty());
    EXPECT_NE(read_text_file(dir_ / "run/runlog.ndjson").find(R"("checkpoints")"), std::string::npos);
}

TEST_F(Cli, TrainIsByteReproducible) {
    synth_small();
    ASSERT_EQ(run(quick_train("one", "1")), 0);
    ASSERT_EQ(run(quick_train("two", "1")), 0);
    for (const char* f : {"checkpoint.bin", "runlog.ndjson", "fold_report.json"}) {
        EXPECT_EQ(read_text_file(dir_ / "one" / f), read_text_file(dir_ / "two" / f)) << f;
    }
}

TEST_F(Cli, TrainRejectsBadFoldAndMissingSplit) {
    synth_small();
    EXPECT_EQ(run(quick_train("bad", "7")), 1);
    auto both = quick_train("both", "0");
    both.push_back("--full");
    EXPECT_EQ(run(both), 1);
    EXPECT_EQ(run({"train", "--corpus", path("data/corpus.ndjson"), "--taxonomy", path("data/taxonomy.json"),
                   "--out", path("x"), "--full", "--set", "tau=0"}),
              1);
}

TEST_F(Cli, EvalAggregatesFoldsAndClustering) {
    synth_small();
    std::vector<std::string> args{"eval", "--corpus", path("data/corpus.ndjson"), "--taxonomy",
                                  path("data/taxonomy.json"), "--out", path("report.json"), "--csv",
                                  path("table.csv"), "--clustering"};
    for (const std::string fold : {"0", "1", "2", "full"}) {
        ASSERT_EQ(run(quick_train("f" + fold, fold, "flags=[]")), 0);
        args.push_back("--checkpoint");
        args.push_back(path("f" + fold + "/checkpoint.bin"));
    }
    ASSERT_EQ(run(args), 0);
    const EvalReport r = parse_report(read_text_file(path("report.json")));
    ASSERT_EQ(r.folds.size(), 3u);
    EXPECT_TRUE(r.full_f1.has_value());
    EXPECT_NEAR(r.delta, r.us_avg - r.s_avg, 1e-9);
    EXPECT_EQ(r.clustering.size(), 6u);
    for (const auto& f : r.folds) {
        const auto fold_report = nlohmann::json::parse(read_text_file(dir_ / ("f" + std::to_string(f.fold_id)) /
                                                                      "fold_report.json"));
        EXPECT_NEAR(f.seen_f1, fold_report["seen_f1"].get<double>(), 1e-6);
        EXPECT_NEAR(f.unseen_f1, fold_report["unseen_f1"].get<double>(), 1e-6);
    }
    EXPECT_EQ(read_text_file(path("table.csv")).rfind(report_csv_header(3), 0), 0u);
}

TEST_F(Cli, EvalMissingFoldOrCheckpoint) {
    synth_small();
    ASSERT_EQ(run(quick_train("f0", "0", "flags=[]")), 0);
    const std::vector<std::string> base{"eval", "--corpus", path("data/corpus.ndjson"), "--taxonomy",
                                        path("data/taxonomy.json"), "--out", path("report.json")};
    auto only_one = base;
    only_one.insert(only_one.end(), {"--checkpoint", path("f0/checkpoint.bin")});
    EXPECT_EQ(run(only_one), 1);
    auto missing = base;
    missing.insert(missing.end(), {"--checkpoint", path("nope.bin")});
    EXPECT_EQ(run(missing), 1);
}

TEST_F(Cli, UnknownSubcommandIsAnInputError) {
    EXPECT_EQ(run({"fly"}), 1);
    EXPECT_EQ(run({}), 1);
}
