#include <gtest/gtest.h>

#include "structrep/config.hpp"
#include "structrep/error.hpp"

using namespace structrep;

TEST(Config, DefaultValues) {
    const TrainingConfig c;
    EXPECT_EQ(c.seed, 155u);
    EXPECT_EQ(c.k_max, 3);
    EXPECT_EQ(c.m_max, 6);
    EXPECT_EQ(c.rank, 8);
    EXPECT_EQ(c.lora_alpha, 16.0);
    EXPECT_EQ(c.stage1_epochs, 2);
    EXPECT_EQ(c.patience, 3);
    EXPECT_EQ(c.eta_ft, 3e-5);
    EXPECT_EQ(c.flags, FeatureFlags::all());
}

TEST(Config, SerializeParseRoundTrip) {
    TrainingConfig c;
    c.seed = 9;
    c.granularity = Granularity::Category;
    c.flags = FeatureFlags::parse({"contrastive_only", "add_ordinal", "gate_stop_gradient"});
    c.fold_spec.test_fraction = 0.3;
    EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Config, Overrides) {
    TrainingConfig c;
    apply_override(c, "eta_theta=0.5");
    apply_override(c, "granularity=category");
    apply_override(c, "flags=[]");
    apply_override(c, "fold_spec.n_folds=2");
    EXPECT_EQ(c.eta_theta, 0.5);
    EXPECT_EQ(c.granularity, Granularity::Category);
    EXPECT_EQ(c.flags, FeatureFlags{});
    EXPECT_EQ(c.fold_spec.n_folds, 2);

    const TrainingConfig before = c;
    EXPECT_THROW(apply_override(c, "tau=-1"), InputError);
    EXPECT_THROW(apply_override(c, "nonsense=1"), InputError);
    EXPECT_THROW(apply_override(c, "no-equals-sign"), InputError);
    EXPECT_EQ(c, before);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config(R"({"learning_rate": 1})"), InputError);
    EXPECT_THROW(parse_config(R"({"batch_size": 0})"), InputError);
    EXPECT_THROW(parse_config(R"({"batch_size": "five"})"), InputError);
    EXPECT_THROW(parse_config("[1, 2]"), InputError);
    EXPECT_THROW(parse_config("{"), InputError);
}

TEST(FeatureFlags, LadderIsStrict) {
    EXPECT_NO_THROW(FeatureFlags::parse({"contrastive_only", "add_ordinal", "add_gating"}));
    EXPECT_THROW(FeatureFlags::parse({"contrastive_only", "add_gating"}), InputError);
    EXPECT_THROW(FeatureFlags::parse({"add_metagradnorm"}), InputError);
    EXPECT_THROW(FeatureFlags::parse({"bogus"}), InputError);
    EXPECT_EQ(FeatureFlags::parse(FeatureFlags::all().names()), FeatureFlags::all());
}

TEST(Weighting, LambdasFixedUnlessFlagged) {
    TrainingConfig c;
    c.flags = FeatureFlags::parse({"contrastive_only", "add_ordinal", "add_gating"});
    const Weighting off = c.weighting(c.initial_meta());
    EXPECT_EQ(off.lambda_base, 1.0);
    EXPECT_EQ(off.lambda_ord, 1.0);
    EXPECT_NEAR(off.t_ctr, 13.0, 1e-12);

    c.flags = FeatureFlags::all();
    const Weighting on = c.weighting(c.initial_meta());
    EXPECT_NEAR(on.lambda_ord, 2.5, 1e-12);
}
