/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tests/test_metrics.cpp
 *
 * Copyright 2026 The cnn3dmm authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "oracles.hpp"

#include "cnn3dmm/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cnn3dmm;
using namespace cnn3dmm::metrics;

namespace {

DepthMap constant_map(int w, int h, double z)
{
    DepthMap d;
    d.width = w;
    d.height = h;
    d.depth.assign(static_cast<std::size_t>(w * h), z);
    return d;
}

std::vector<LabeledScore> random_scores(std::mt19937_64& rng, int n, bool ties)
{
    std::uniform_int_distribution<int> grid(0, 20);
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution pos(0.4);
    std::vector<LabeledScore> s;
    for (int i = 0; i < n; ++i)
    {
        const bool p = pos(rng);
        s.push_back({ties ? grid(rng) / 20.0 : g(rng) + (p ? 0.7 : 0.0), p});
    }
    s[0].positive = true;
    s[1].positive = false;
    return s;
}

} // namespace

TEST(Rmse3d, MatchesDoubleLoop)
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial)
    {
        const auto x = oracle::random_cloud(rng, 1 + static_cast<std::size_t>(trial));
        const auto y = oracle::random_cloud(rng, x.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            for (int k = 0; k < 3; ++k)
                sum += (x[i][k] - y[i][k]) * (x[i][k] - y[i][k]);
        const double n = static_cast<double>(x.size());
        ASSERT_NEAR(rmse3d(x, y), std::sqrt(sum / n), 1e-10);
        ASSERT_NEAR(rmse3d(x, y, true), std::sqrt(sum) / n, 1e-10);
        ASSERT_EQ(rmse3d(x, y), rmse3d(y, x));
        ASSERT_EQ(rmse3d(x, x), 0.0);
    }
    const std::vector<Eigen::Vector3d> one{{0, 0, 0}};
    EXPECT_THROW(rmse3d(one, std::vector<Eigen::Vector3d>{}), std::invalid_argument);
}

TEST(ShapeErrorsTest, ConstantOffsetClosedForm)
{
    const std::vector<Eigen::Vector3d> pts{{0, 0, 100}, {1, 0, 100}};
    const auto e = shape_errors(pts, pts, constant_map(16, 16, 101.0), constant_map(16, 16, 100.0));
    EXPECT_NEAR(e.rmse, 1.0, 1e-9);
    EXPECT_NEAR(e.rel, 0.01, 1e-9);
    EXPECT_NEAR(e.log10, 0.004321, 1e-6);
    EXPECT_NEAR(e.log10, std::log10(101.0) - 2.0, 1e-15);
    EXPECT_EQ(e.rmse3d, 0.0);
}

TEST(ShapeErrorsTest, IdenticalInputsAreZero)
{
    std::mt19937_64 rng(2);
    const auto pts = oracle::random_cloud(rng, 50);
    DepthMap d = constant_map(8, 8, 70.0);
    d.depth[5] = NAN;
    d.depth[9] = 90.0;
    const auto e = shape_errors(pts, pts, d, d);
    EXPECT_EQ(e.rmse3d, 0.0);
    EXPECT_EQ(e.rmse, 0.0);
    EXPECT_EQ(e.log10, 0.0);
    EXPECT_EQ(e.rel, 0.0);
}

TEST(ShapeErrorsTest, OnlyJointlyValidPixelsCount)
{
    const std::vector<Eigen::Vector3d> pts{{0, 0, 0}};
    DepthMap a = constant_map(2, 1, 100.0), b = constant_map(2, 1, 100.0);
    a.depth[1] = 104.0;
    b.depth[0] = NAN;
    const auto e = shape_errors(pts, pts, a, b);
    EXPECT_EQ(e.rmse, 4.0);
    b.depth[1] = NAN;
    EXPECT_THROW(shape_errors(pts, pts, a, b), std::invalid_argument);
    EXPECT_THROW(shape_errors(pts, pts, constant_map(2, 1, -1.0), constant_map(2, 1, 1.0)), std::invalid_argument);
    EXPECT_THROW(shape_errors(pts, pts, constant_map(2, 1, 1.0), constant_map(1, 2, 1.0)), std::invalid_argument);
}

TEST(Roc, HandCase)
{
    // 7 of 8 positive-negative pairs ordered correctly
    const std::vector<LabeledScore> s{{0.9, true}, {0.8, true}, {0.85, false}, {0.1, false}, {0.2, false}, {0.05, false}};
    const auto roc = roc_curve(s);
    EXPECT_EQ(auc(roc), 0.875);
    EXPECT_EQ(oracle::wilcoxon_auc(s), 0.875);
    ASSERT_EQ(roc.size(), 7u);
    EXPECT_TRUE(std::isinf(roc[0].threshold));
    EXPECT_EQ(roc[2].far, 0.25);
    EXPECT_EQ(roc[2].tar, 0.5);
}

TEST(Roc, AucMatchesWilcoxon)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 300; ++trial)
    {
        const auto s = random_scores(rng, 2 + trial % 80, trial % 2 == 0);
        ASSERT_NEAR(auc(roc_curve(s)), oracle::wilcoxon_auc(s), 1e-10);
    }
}

TEST(Roc, PerfectSeparation)
{
    std::vector<LabeledScore> s;
    for (int i = 0; i < 30; ++i)
        s.push_back({1.0 + i, true});
    for (int i = 0; i < 40; ++i)
        s.push_back({-1.0 - i, false});
    const auto m = verification_metrics(s);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.auc, 1.0);
    EXPECT_EQ(m.eer, 0.0);
    EXPECT_EQ(m.tar_at_far_10, 1.0);
    EXPECT_EQ(m.tar_at_far_1, 1.0);
}

TEST(Roc, IndependentLabelsGiveChance)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LabeledScore> s;
    const int n = 2000;
    for (int i = 0; i < 2 * n; ++i)
        s.push_back({u(rng), i % 2 == 0});
    const double se = std::sqrt((2.0 * n + 1.0) / (12.0 * n * n));
    EXPECT_NEAR(auc(roc_curve(s)), 0.5, 3.0 * se);
}

TEST(Roc, EerAndTarInterpolate)
{
    // Positives 4,3,1; negatives 2,0. Curve: (0,0) (0,1/3) (0,2/3) (1/2,2/3) (1/2,1) (1,1).
    const std::vector<LabeledScore> s{{4, true}, {3, true}, {2, false}, {1, true}, {0, false}};
    const auto roc = roc_curve(s);
    ASSERT_EQ(roc.size(), 6u);
    // FAR - FRR: at (0, 2/3) -1/3, at (1/2, 2/3) +1/6; zero crossing at FAR = 1/3.
    EXPECT_NEAR(equal_error_rate(roc), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(tar_at_far(roc, 0.25), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(tar_at_far(roc, 0.5), 1.0);
    EXPECT_EQ(tar_at_far(roc, 0.0), 2.0 / 3.0);
    EXPECT_EQ(verification_metrics(s).accuracy, 0.8);
}

TEST(Roc, RejectsSingleClassAndNan)
{
    EXPECT_THROW(roc_curve(std::vector<LabeledScore>{{1, true}, {2, true}}), std::invalid_argument);
    EXPECT_THROW(roc_curve(std::vector<LabeledScore>{{NAN, true}, {2, false}}), std::invalid_argument);
}

TEST(Roc, StrictlyIncreasingTransformChangesNothing)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial)
    {
        auto s = random_scores(rng, 50, true);
        const auto a = verification_metrics(s);
        for (auto& x : s)
            x.score = std::exp(3.0 * x.score) - 7.0;
        const auto b = verification_metrics(s);
        ASSERT_EQ(a.accuracy, b.accuracy);
        ASSERT_EQ(a.eer, b.eer);
        ASSERT_EQ(a.auc, b.auc);
        ASSERT_EQ(a.tar_at_far_10, b.tar_at_far_10);
        ASSERT_EQ(a.tar_at_far_1, b.tar_at_far_1);
    }
}

TEST(Cmc, MateAlwaysTop)
{
    std::vector<IdentificationScore> s;
    for (int p = 0; p < 5; ++p)
        for (int g = 0; g < 5; ++g)
            s.push_back({"p" + std::to_string(p), "g" + std::to_string(p), "g" + std::to_string(g), p == g ? 1.0 : 0.1});
    const auto c = cmc(s);
    ASSERT_EQ(c.size(), 5u);
    EXPECT_EQ(c[0], 1.0);
}

TEST(Cmc, MateRankedThird)
{
    const std::vector<IdentificationScore> s{
        {"q", "c", "a", 0.9}, {"q", "c", "b", 0.8}, {"q", "c", "c", 0.7}, {"q", "c", "d", 0.6}, {"q", "c", "e", 0.5}};
    const auto c = cmc(s);
    EXPECT_EQ(c, (std::vector<double>{0, 0, 1, 1, 1}));
}

TEST(Cmc, TiesBreakByGalleryId)
{
    const std::vector<IdentificationScore> s{{"q", "b", "a", 0.5}, {"q", "b", "b", 0.5}, {"q", "b", "c", 0.5}};
    EXPECT_EQ(cmc(s), (std::vector<double>{0, 1, 1}));
}

TEST(Cmc, MatchesNaiveRanking)
{
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> grid(0, 9);
    for (int trial = 0; trial < 100; ++trial)
    {
        const int gsize = 2 + trial % 9, probes = 1 + trial % 7;
        std::vector<IdentificationScore> s;
        std::vector<int> rank_of(static_cast<std::size_t>(probes));
        for (int p = 0; p < probes; ++p)
        {
            const int mate = grid(rng) % gsize;
            std::vector<double> row(static_cast<std::size_t>(gsize));
            for (int g = 0; g < gsize; ++g)
            {
                row[static_cast<std::size_t>(g)] = grid(rng);
                s.push_back({"p" + std::to_string(p), "g" + std::to_string(mate), "g" + std::to_string(g),
                             row[static_cast<std::size_t>(g)]});
            }
            // Gallery ids g0..g8 sort like their numbers.
            int rank = 1;
            for (int g = 0; g < gsize; ++g)
                if (row[static_cast<std::size_t>(g)] > row[static_cast<std::size_t>(mate)] ||
                    (row[static_cast<std::size_t>(g)] == row[static_cast<std::size_t>(mate)] && g < mate))
                    ++rank;
            rank_of[static_cast<std::size_t>(p)] = rank;
        }
        const auto c = cmc(s);
        ASSERT_EQ(c.size(), static_cast<std::size_t>(gsize));
        for (int k = 1; k <= gsize; ++k)
        {
            int within = 0;
            for (int r : rank_of)
                within += r <= k;
            ASSERT_EQ(c[static_cast<std::size_t>(k - 1)], static_cast<double>(within) / probes);
        }
        ASSERT_EQ(c.back(), 1.0);
    }
}

TEST(Cmc, RejectsBrokenProtocols)
{
    EXPECT_THROW(cmc(std::vector<IdentificationScore>{{"q", "z", "a", 1.0}}), std::invalid_argument);
    EXPECT_THROW(cmc(std::vector<IdentificationScore>{{"q", "a", "a", 1.0}, {"q", "a", "a", 0.5}}),
                 std::invalid_argument);
    EXPECT_THROW(cmc(std::vector<IdentificationScore>{{"q", "a", "a", 1.0}, {"q", "b", "b", 0.5}}),
                 std::invalid_argument);
    EXPECT_THROW(cmc(std::vector<IdentificationScore>{{"q", "a", "a", NAN}}), std::invalid_argument);
}

TEST(IdentificationFile, RoundTrip)
{
    const auto dir = oracle::scratch_dir("ident");
    const std::vector<IdentificationScore> s{{"p1", "a", "a", 0.25}, {"p1", "a", "b", -1.0 / 3.0}};
    write_identification(dir / "i.csv", s);
    const auto back = read_identification(dir / "i.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].gallery_id, "b");
    EXPECT_EQ(back[1].score, -1.0 / 3.0);
    std::filesystem::remove_all(dir);
}
