/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tests/test_pooling.cpp
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

#include "cnn3dmm/pooling.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace cnn3dmm;
using pooling::ItemKind;
using pooling::TemplateItem;
using pooling::WeightedEstimate;

namespace {

ParamVector pv(double a, double b)
{
    return {Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b)};
}

// Random case: 1..12 estimates of dimension 1..20, weights in (0, 10], a few zeros.
std::vector<WeightedEstimate> random_case(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> n_dist(1, 12), d_dist(1, 20);
    std::uniform_real_distribution<double> w_dist(1e-3, 10.0), u(0.0, 1.0);
    const int n = n_dist(rng), d = d_dist(rng);
    const int ks = d / 2;
    std::vector<WeightedEstimate> est;
    for (int i = 0; i < n; ++i)
        est.push_back({oracle::random_params(rng, ks, d - ks, 5.0), u(rng) < 0.1 ? 0.0 : w_dist(rng)});
    est[0].weight = w_dist(rng);  // never all zero
    return est;
}

} // namespace

TEST(Pool, HandCaseWeightedAverage)
{
    const std::vector<WeightedEstimate> e{{pv(0, 4), 1.0}, {pv(4, 0), 3.0}};
    const ParamVector p = pooling::pool(e);
    EXPECT_EQ(p.alpha(0), 3.0);
    EXPECT_EQ(p.beta(0), 1.0);
}

TEST(Pool, IdenticalInputsAreAFixedPoint)
{
    std::mt19937_64 rng(1);
    const ParamVector g = oracle::random_params(rng, 99, 99);
    std::vector<WeightedEstimate> e;
    for (double w : {0.3, 7.0, 1e-4, 2.5})
        e.push_back({g, w});
    EXPECT_EQ(pooling::pool(e).concatenated(), g.concatenated());
}

TEST(Pool, ZeroWeightDropsAnEstimate)
{
    const std::vector<WeightedEstimate> e{{pv(1.25, -3), 2.0}, {pv(100, 100), 0.0}};
    EXPECT_EQ(pooling::pool(e).concatenated(), pv(1.25, -3).concatenated());
}

TEST(Pool, RejectsDegenerateInput)
{
    EXPECT_THROW(pooling::pool(std::vector<WeightedEstimate>{}), std::invalid_argument);
    EXPECT_THROW(pooling::pool(std::vector<WeightedEstimate>{{pv(1, 1), 0.0}, {pv(2, 2), 0.0}}), std::invalid_argument);
    EXPECT_THROW(pooling::pool(std::vector<WeightedEstimate>{{pv(1, 1), -1.0}}), std::invalid_argument);
    EXPECT_THROW(pooling::pool(std::vector<WeightedEstimate>{{pv(1, 1), NAN}}), std::invalid_argument);
    EXPECT_THROW(pooling::pool(std::vector<WeightedEstimate>{{pv(NAN, 1), 1.0}}), std::invalid_argument);
    const ParamVector wide(Eigen::Vector2d(1, 2), Eigen::VectorXd::Zero(1));
    EXPECT_THROW(pooling::pool(std::vector<WeightedEstimate>{{pv(1, 1), 1.0}, {wide, 1.0}}), std::invalid_argument);
}

TEST(PoolProperty, WeightScaleInvariance)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> c_dist(-6.0, 6.0);
    for (int trial = 0; trial < 2000; ++trial)
    {
        auto e = random_case(rng);
        const ParamVector a = pooling::pool(e);
        const double c = std::pow(10.0, c_dist(rng));
        for (auto& x : e)
            x.weight *= c;
        const ParamVector b = pooling::pool(e);
        const double scale = std::max(1.0, a.concatenated().cwiseAbs().maxCoeff());
        ASSERT_LE((a.concatenated() - b.concatenated()).cwiseAbs().maxCoeff(), 1e-12 * scale) << "trial " << trial;
    }
}

TEST(PoolProperty, ConvexHullContainment)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 2000; ++trial)
    {
        const auto e = random_case(rng);
        const Eigen::VectorXd p = pooling::pool(e).concatenated();
        for (Eigen::Index k = 0; k < p.size(); ++k)
        {
            double lo = INFINITY, hi = -INFINITY;
            for (const auto& x : e)
            {
                lo = std::min(lo, x.gamma.concatenated()(k));
                hi = std::max(hi, x.gamma.concatenated()(k));
            }
            ASSERT_GE(p(k), lo) << "trial " << trial;
            ASSERT_LE(p(k), hi) << "trial " << trial;
        }
    }
}

TEST(PoolProperty, PermutationInvariance)
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 2000; ++trial)
    {
        auto e = random_case(rng);
        const Eigen::VectorXd a = pooling::pool(e).concatenated();
        std::shuffle(e.begin(), e.end(), rng);
        ASSERT_EQ(pooling::pool(e).concatenated(), a) << "trial " << trial;
    }
}

TEST(PoolTemplate, VideoAndStillHandCase)
{
    const std::vector<TemplateItem> t{
        {ItemKind::video, {{pv(0, 0), 1.0}, {pv(2, 2), 1.0}}},
        {ItemKind::still_image, {{pv(4, 0), 1.0}}},
    };
    const ParamVector p = pooling::pool_template(t);
    EXPECT_EQ(p.alpha(0), 2.5);
    EXPECT_EQ(p.beta(0), 0.5);
}

TEST(PoolTemplate, IdenticalFramesAndStill)
{
    const ParamVector g = pv(1.75, -0.5);
    const std::vector<TemplateItem> t{
        {ItemKind::video, {{g, 1.0}, {g, 1.0}, {g, 1.0}}},
        {ItemKind::still_image, {{g, 1.0}}},
    };
    EXPECT_EQ(pooling::pool_template(t).concatenated(), g.concatenated());
}

TEST(PoolTemplate, AllStillsEqualsFlatEqualWeightPool)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial)
    {
        auto e = random_case(rng);
        std::vector<TemplateItem> t;
        for (auto& x : e)
        {
            x.weight = 1.0;
            t.push_back({ItemKind::still_image, {x}});
        }
        ASSERT_EQ(pooling::pool_template(t).concatenated(), pooling::pool(e).concatenated()) << "trial " << trial;
    }
}

TEST(PoolTemplate, RejectsMalformedItems)
{
    EXPECT_THROW(pooling::pool_template(std::vector<TemplateItem>{}), std::invalid_argument);
    EXPECT_THROW(pooling::pool_template(std::vector<TemplateItem>{{ItemKind::video, {}}}), std::invalid_argument);
    EXPECT_THROW(pooling::pool_template(std::vector<TemplateItem>{
                     {ItemKind::still_image, {{pv(1, 1), 1.0}, {pv(2, 2), 1.0}}}}),
                 std::invalid_argument);
}

TEST(ItemKindText, ParsesAliases)
{
    EXPECT_EQ(pooling::parse_item_kind("still"), ItemKind::still_image);
    EXPECT_EQ(pooling::parse_item_kind("image"), ItemKind::still_image);
    EXPECT_EQ(pooling::parse_item_kind("video"), ItemKind::video);
    EXPECT_THROW(pooling::parse_item_kind("gif"), std::invalid_argument);
}

TEST(PoolFiles, EstimatesRoundTripAndBySubject)
{
    const auto dir = oracle::scratch_dir("pool");
    std::vector<pooling::EstimateRow> rows{
        {"a", "a1", ItemKind::still_image, 1.0, pv(0, 4)},
        {"a", "a2", ItemKind::still_image, 3.0, pv(4, 0)},
        {"b", "bv", ItemKind::video, 1.0, pv(0, 0)},
        {"b", "bv", ItemKind::video, 1.0, pv(2, 2)},
        {"b", "b1", ItemKind::still_image, 1.0, pv(4, 0)},
    };
    pooling::write_estimates(dir / "e.csv", rows);
    const auto back = pooling::read_estimates(dir / "e.csv", 1);
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        EXPECT_EQ(back[i].subject_id, rows[i].subject_id);
        EXPECT_EQ(back[i].item_id, rows[i].item_id);
        EXPECT_EQ(back[i].kind, rows[i].kind);
        EXPECT_EQ(back[i].weight, rows[i].weight);
        EXPECT_EQ(back[i].gamma.concatenated(), rows[i].gamma.concatenated());
    }

    const auto flat = pooling::pool_by_subject(back, pooling::PoolMode::weighted);
    EXPECT_EQ(flat.at("a").concatenated(), pv(3, 1).concatenated());
    const auto tmpl = pooling::pool_by_subject(back, pooling::PoolMode::template_);
    EXPECT_EQ(tmpl.at("b").concatenated(), pv(2.5, 0.5).concatenated());

    pooling::write_pooled(dir / "p.csv", tmpl);
    const auto again = pooling::read_pooled(dir / "p.csv", 1);
    ASSERT_EQ(again.size(), 2u);
    EXPECT_EQ(again.at("b").concatenated(), tmpl.at("b").concatenated());
    std::filesystem::remove_all(dir);
}
