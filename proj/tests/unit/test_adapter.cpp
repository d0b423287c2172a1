#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "structrep/adapter.hpp"
#include "structrep/error.hpp"

using namespace structrep;
namespace st = structrep::testing;

namespace {

Weighting all_on() {
    Weighting w;
    w.lambda_base = 1.3;
    w.lambda_ord = 2.1;
    w.t_ctr = 4.0;
    w.t_ord = 0.7;
    return w;
}

}  // namespace

TEST(InitAdapter, IdentityAtInitAndScale) {
    const Adapter a = init_adapter(12, 8, 16.0, 155);
    EXPECT_EQ(a.scale, 2.0);
    EXPECT_EQ(a.rank(), 8u);
    EXPECT_EQ(a.dim(), 12u);
    Rng rng = make_rng(1, "identity");
    for (int t = 0; t < 20; ++t) {
        const Matrix x = st::gaussian_matrix(rng, 1, 12);
        const auto y = forward(a, x.row(0));
        for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(y[j], x(0, j));
    }
    EXPECT_EQ(init_adapter(12, 8, 16.0, 155), a);
    EXPECT_NE(init_adapter(12, 8, 16.0, 156).down, a.down);
    EXPECT_THROW(init_adapter(4, 5, 16.0, 1), InputError);
    EXPECT_THROW(init_adapter(4, 0, 16.0, 1), InputError);
}

TEST(InitAdapter, DownEntriesHaveVarianceOneOverRank) {
    const Adapter a = init_adapter(400, 4, 8.0, 3);
    double sum = 0.0, sq = 0.0;
    for (double v : a.down.values()) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(a.down.size());
    EXPECT_NEAR(sum / n, 0.0, 0.05);
    EXPECT_NEAR(sq / n, 0.25, 0.03);
}

TEST(Forward, ZeroScaleIsIdentity) {
    Adapter a = init_adapter(3, 1, 1.0, 2);
    a.up = Matrix(3, 1, 0.7);
    a.scale = 0.0;
    const std::vector<double> x{0.3, -1.0, 2.0};
    EXPECT_EQ(forward(a, x), x);
}

TEST(Forward, RankOneByHand) {
    // A = [1 2], B = [3; -1], scale 0.5, x = (1, 1): A x = 3, B A x = (9, -3)
    Adapter a;
    a.down = Matrix(1, 2);
    a.down(0, 0) = 1.0;
    a.down(0, 1) = 2.0;
    a.up = Matrix(2, 1);
    a.up(0, 0) = 3.0;
    a.up(1, 0) = -1.0;
    a.scale = 0.5;
    const auto y = forward(a, std::vector<double>{1.0, 1.0});
    EXPECT_DOUBLE_EQ(y[0], 5.5);
    EXPECT_DOUBLE_EQ(y[1], -0.5);
    EXPECT_THROW(forward(a, std::vector<double>{1.0, 1.0, 1.0}), InputError);
}

TEST(Backward, MatchesIndependentFiniteDifferences) {
    Rng rng = make_rng(2, "adapter-fd");
    const ObjectiveParams params{0.5, 0.3};
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto in = st::random_instance(rng, 8, 3, 4, 2, 3);
        for (bool ordinal : {false, true}) {
            Weighting w = all_on();
            w.ordinal = ordinal;
            const BackwardResult r = backward(in.adapter, in.base, in.batch, params, w);
            EXPECT_NEAR(r.objective, st::reference_objective(in.adapter, in.base, in.batch, params, w), 1e-12);
            worst = std::max(worst, st::max_rel_error(r.grad, st::fd_gradient(in.adapter, in.base, in.batch, params, w)));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Backward, SixTwoThreeInstance) {
    Rng rng = make_rng(3, "adapter-623");
    auto in = st::random_instance(rng, 6, 2, 3, 2, 3);
    while (in.adapter.dim() != 6 || in.adapter.rank() != 2 || in.batch.size() != 3) {
        in = st::random_instance(rng, 6, 2, 3, 2, 3);
    }
    const ObjectiveParams params{0.07, 0.05};
    const Weighting w = all_on();
    const auto r = backward(in.adapter, in.base, in.batch, params, w);
    EXPECT_LT(st::max_rel_error(r.grad, st::fd_gradient(in.adapter, in.base, in.batch, params, w)), 1e-4);
}

TEST(Backward, DownGradientIsExactlyZeroAtInit) {
    Rng rng = make_rng(4, "adapter-zero");
    for (int t = 0; t < 20; ++t) {
        const auto in = st::random_instance(rng, 8, 3, 4, 2, 3, true);
        const auto r = backward(in.adapter, in.base, in.batch, ObjectiveParams{}, all_on());
        for (double v : r.grad.d_down.values()) ASSERT_EQ(v, 0.0);
    }
}

TEST(Backward, ScalingTheObjectiveScalesTheGradient) {
    Rng rng = make_rng(5, "adapter-linear");
    const auto in = st::random_instance(rng, 6, 2, 3, 2, 2);
    Weighting w = all_on();
    w.gating = false;
    const auto one = backward(in.adapter, in.base, in.batch, ObjectiveParams{}, w);
    w.lambda_base *= 3.0;
    w.lambda_ord *= 3.0;
    const auto three = backward(in.adapter, in.base, in.batch, ObjectiveParams{}, w);
    EXPECT_NEAR(three.objective, 3.0 * one.objective, 1e-12);
    for (std::size_t i = 0; i < one.grad.d_down.size(); ++i) {
        EXPECT_NEAR(three.grad.d_down.values()[i], 3.0 * one.grad.d_down.values()[i], 1e-10);
    }
    for (std::size_t i = 0; i < one.grad.d_up.size(); ++i) {
        EXPECT_NEAR(three.grad.d_up.values()[i], 3.0 * one.grad.d_up.values()[i], 1e-10);
    }
}

TEST(Backward, EmptyBatch) {
    const Adapter a = init_adapter(4, 2, 4.0, 1);
    EXPECT_THROW(backward(a, Matrix(2, 4, 1.0), Batch{}, ObjectiveParams{}, Weighting{}), InputError);
}

TEST(Backward, TermsSumToTotal) {
    Rng rng = make_rng(6, "adapter-terms");
    const auto in = st::random_instance(rng, 6, 2, 4, 2, 3);
    const auto table = sample_gradients(in.adapter, in.base, in.batch, ObjectiveParams{});
    const Weighting w = all_on();
    const auto total = combine(table, w, Term::Total);
    const auto ctr = combine(table, w, Term::Contrastive);
    const auto ord = combine(table, w, Term::Ordinal);
    EXPECT_NEAR(ctr.objective + ord.objective, total.objective, 1e-12);
    for (std::size_t i = 0; i < total.grad.d_up.size(); ++i) {
        EXPECT_NEAR(ctr.grad.d_up.values()[i] + ord.grad.d_up.values()[i], total.grad.d_up.values()[i], 1e-12);
    }
}

TEST(SgdStep, Examples) {
    Rng rng = make_rng(7, "sgd");
    Adapter a = init_adapter(5, 2, 4.0, 7);
    a.up = st::gaussian_matrix(rng, 5, 2);
    AdapterGrad zero = AdapterGrad::zeros_like(a);
    EXPECT_EQ(sgd_step(a, zero, 0.1), a);

    AdapterGrad self{a.down, Matrix(5, 2)};
    EXPECT_EQ(sgd_step(a, self, 1.0).down, Matrix(2, 5));

    AdapterGrad g{st::gaussian_matrix(rng, 2, 5), st::gaussian_matrix(rng, 5, 2)};
    const Adapter once = sgd_step(a, g, 0.25);
    const Adapter twice = sgd_step(sgd_step(a, g, 0.125), g, 0.125);
    for (std::size_t i = 0; i < once.down.size(); ++i) EXPECT_NEAR(once.down.values()[i], twice.down.values()[i], 1e-15);
    for (std::size_t i = 0; i < once.up.size(); ++i) EXPECT_NEAR(once.up.values()[i], twice.up.values()[i], 1e-15);

    g.d_up(0, 0) = std::nan("");
    EXPECT_THROW(sgd_step(a, g, 0.1), NumericalError);
}

TEST(SgdStep, SmallStepDecreasesObjective) {
    Rng rng = make_rng(8, "descent");
    const ObjectiveParams params{0.5, 0.3};
    for (int t = 0; t < 20; ++t) {
        const auto in = st::random_instance(rng, 8, 3, 4, 2, 3);
        const Weighting w = all_on();
        const auto r = backward(in.adapter, in.base, in.batch, params, w);
        if (r.grad.norm() < 1e-8) continue;
        const Adapter next = sgd_step(in.adapter, r.grad, 1e-4);
        EXPECT_LT(backward(next, in.base, in.batch, params, w).objective, r.objective);
    }
}
