#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dsf/errors.hpp"
#include "dsf/hsic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dsf;

TEST(Gram, GaussianDiagonalIsOneAndSymmetric) {
    Rng rng(1);
    Graph g;
    const Array k = gram(KernelSpec::gaussian(), g.constant(test::normal_array({12, 3}, rng))).value();
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(k.at(i, i), 1.0);
        for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(k.at(i, j), k.at(j, i));
    }
}

TEST(Gram, LinearKernelHandCase) {
    Graph g;
    const Array k = gram(KernelSpec::linear(), g.constant(Array({2, 1}, {1, -1}))).value();
    EXPECT_EQ(k, Array({2, 2}, {1, -1, -1, 1}));
}

TEST(Gram, GaussianEntryFormula) {
    Graph g;
    const Array k = gram(KernelSpec::gaussian(0.5), g.constant(Array({2, 2}, {0, 0, 1, 1}))).value();
    EXPECT_NEAR(k.at(0, 1), std::exp(-2.0 / (2 * 0.25)), 1e-15);
}

TEST(Gram, TooFewSamples) {
    Graph g;
    EXPECT_THROW(gram(KernelSpec::linear(), g.constant(Array({1, 2}, 1.0))), BatchTooSmallError);
}

TEST(Bandwidth, TwoPoints) {
    EXPECT_DOUBLE_EQ(median_bandwidth(Array({2, 1}, {0, 2})), std::sqrt(2.0));
}

TEST(Bandwidth, UniformGridOfTen) {
    // Oracle: enumerate all 45 pairwise distances of {0..9} and take the median.
    std::vector<double> d;
    for (int i = 0; i < 10; ++i)
        for (int j = i + 1; j < 10; ++j) d.push_back(j - i);
    ASSERT_EQ(d.size(), 45u);
    std::sort(d.begin(), d.end());
    EXPECT_EQ(d[22], 3.0);
    Array grid({10, 1});
    std::iota(grid.data.begin(), grid.data.end(), 0.0);
    EXPECT_DOUBLE_EQ(median_bandwidth(grid), d[22] / std::sqrt(2.0));
    EXPECT_EQ(median_bandwidth(grid), median_bandwidth(grid));
}

TEST(Bandwidth, IdenticalRowsAreDegenerate) {
    try {
        median_bandwidth(Array({4, 2}, 0.7));
        FAIL();
    } catch (const DegenerateInputError& e) {
        EXPECT_EQ(e.kind(), "degenerate-input");
    }
}

TEST(Hsic, TwoSampleLinearHandCaseIsOne) {
    Graph g;
    Tensor u = g.constant(Array({2, 1}, {1, -1}));
    EXPECT_EQ(detail::hsic_statistic(u, u, KernelSpec::linear(), KernelSpec::linear()).item(), 1.0);
}

TEST(Hsic, ConstantInputScoresZero) {
    Rng rng(2);
    Graph g;
    Tensor u = g.constant(Array({8, 2}, 3.0));
    Tensor v = g.constant(test::normal_array({8, 3}, rng));
    EXPECT_NEAR(hsic_penalty(u, v, KernelSpec::gaussian(1.0), KernelSpec::gaussian()).item(), 0.0, 1e-15);
}

TEST(Hsic, MatchesThreeTermForm) {
    Rng rng(3);
    Graph g;
    const Array u = test::normal_array({20, 2}, rng), v = test::normal_array({20, 3}, rng);
    for (auto spec : {KernelSpec::linear(), KernelSpec::gaussian()}) {
        const double got = hsic_penalty(g.constant(u), g.constant(v), spec, spec).item();
        const double want = test::hsic_three_term(gram_matrix(spec, u), gram_matrix(spec, v));
        EXPECT_NEAR(got, want, 1e-13);
        EXPECT_NEAR(hsic_from_grams(center_gram(gram_matrix(spec, u)), gram_matrix(spec, v)), want, 1e-13);
    }
}

TEST(Hsic, Preconditions) {
    Graph g;
    Tensor a = g.constant(Array({5, 1}, {1, 2, 3, 4, 5}));
    Tensor b = g.constant(Array({6, 1}, {1, 2, 3, 4, 5, 6}));
    EXPECT_THROW(hsic_penalty(a, b, KernelSpec::linear(), KernelSpec::linear()), DimensionError);
    Tensor c = g.constant(Array({3, 1}, {1, 2, 3}));
    EXPECT_THROW(hsic_penalty(c, c, KernelSpec::linear(), KernelSpec::linear()), BatchTooSmallError);
}

TEST(Hsic, NonNegative) {
    for (std::uint64_t t = 0; t < 50; ++t) {
        Rng rng(derive_seed(4, {t}));
        Graph g;
        const double h = hsic_penalty(g.constant(test::normal_array({10, 2}, rng)),
                                      g.constant(test::normal_array({10, 2}, rng)),
                                      KernelSpec::gaussian(), KernelSpec::gaussian()).item();
        EXPECT_GE(h, 0.0);
    }
}

TEST(Hsic, SelfDependenceBeatsShuffle) {
    int wins = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        Rng rng(derive_seed(5, {t}));
        const Array u = test::normal_array({256, 1}, rng);
        std::vector<std::size_t> perm(256);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = 255; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
        const Array kc = center_gram(gram_matrix(KernelSpec::gaussian(), u));
        const Array l = gram_matrix(KernelSpec::gaussian(), u);
        wins += hsic_from_grams(kc, l) > hsic_from_grams(kc, l, perm);
    }
    EXPECT_GE(wins, 95);
}

TEST(Hsic, JointRowPermutationInvariance) {
    Rng rng(6);
    const Array u = test::normal_array({30, 2}, rng), v = test::normal_array({30, 2}, rng);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 29; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
    Array up({30, 2}), vp({30, 2});
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            up.at(i, j) = u.at(perm[i], j);
            vp.at(i, j) = v.at(perm[i], j);
        }
    Graph g;
    const auto k = KernelSpec::gaussian();
    const double a = hsic_penalty(g.constant(u), g.constant(v), k, k).item();
    const double b = hsic_penalty(g.constant(up), g.constant(vp), k, k).item();
    EXPECT_NEAR(a, b, 1e-14 * std::max(1.0, a));
}

TEST(Hsic, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    Parameter u("u", test::normal_array({8, 2}, rng));
    Parameter v("v", test::normal_array({8, 3}, rng));
    Parameter* ps[] = {&u, &v};
    // Bandwidths are fixed numbers: finite differences must not move them.
    const auto ku = KernelSpec::gaussian(median_bandwidth(u.value));
    const auto kv = KernelSpec::gaussian(median_bandwidth(v.value));
    const auto r = grad_check([&](Graph& g) { return hsic_penalty(g.param(u), g.param(v), ku, kv); },
                              ps, 1e-5, 1e-4);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
    const auto rl = grad_check(
        [&](Graph& g) { return hsic_penalty(g.param(u), g.param(v), KernelSpec::linear(), KernelSpec::linear()); },
        ps, 1e-5, 1e-4);
    EXPECT_TRUE(rl.passed) << rl.max_rel_error;
}

TEST(Hsic, PermutationNullCalibration) {
    Rng rng(8);
    int independent_below = 0, dependent_above = 0;
    for (int t = 0; t < 100; ++t) {
        const Array u = test::normal_array({256, 1}, rng), v = test::normal_array({256, 1}, rng);
        independent_below += !test::hsic_exceeds_null(u, v, 200, rng);
        dependent_above += test::hsic_exceeds_null(u, u, 200, rng);
    }
    EXPECT_GE(independent_below, 90);
    EXPECT_EQ(dependent_above, 100);
}
