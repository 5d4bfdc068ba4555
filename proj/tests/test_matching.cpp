/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tests/test_matching.cpp
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

#include "cnn3dmm/matching.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>

using namespace cnn3dmm;
using namespace cnn3dmm::matching;

namespace {

Descriptor desc(std::initializer_list<double> v)
{
    Descriptor d;
    d.values = Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Eigen::Index>(v.size()));
    return d;
}

std::vector<Eigen::VectorXd> gaussian_set(std::mt19937_64& rng, int n, Eigen::Index d, const Eigen::VectorXd& scale)
{
    std::vector<Eigen::VectorXd> out;
    for (int i = 0; i < n; ++i)
        out.push_back(oracle::random_vector(rng, d).cwiseProduct(scale));
    return out;
}

PcaTransform identity_pca(Eigen::Index d)
{
    return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Ones(d)};
}

} // namespace

TEST(FitPca, LineDataGivesItsDirection)
{
    std::mt19937_64 rng(1);
    const Eigen::VectorXd dir = oracle::random_vector(rng, 6).normalized();
    const Eigen::VectorXd mean = oracle::random_vector(rng, 6);
    std::vector<Eigen::VectorXd> pts;
    std::normal_distribution<double> g(0.0, 3.0);
    for (int i = 0; i < 50; ++i)
        pts.push_back(mean + g(rng) * dir);
    const auto pca = fit_pca(std::span<const Eigen::VectorXd>(pts), 1);
    ASSERT_EQ(pca.components.cols(), 1);
    EXPECT_GT(std::abs(pca.components.col(0).dot(dir)), 1 - 1e-8);
}

TEST(FitPca, DefaultKeepsOnlyPositiveEigenvalues)
{
    std::mt19937_64 rng(2);
    const Eigen::VectorXd dir = oracle::random_vector(rng, 6).normalized();
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < 30; ++i)
        pts.push_back(oracle::random_vector(rng, 1)(0) * dir);
    EXPECT_EQ(fit_pca(std::span<const Eigen::VectorXd>(pts)).components.cols(), 1);

    const auto full = gaussian_set(rng, 5, 10, Eigen::VectorXd::Ones(10));
    EXPECT_EQ(fit_pca(std::span<const Eigen::VectorXd>(full)).components.cols(), 4);  // N - 1
}

TEST(FitPca, IsotropicVariancesAgree)
{
    // Sampling spread of the eigenvalues grows like sqrt(D / N); D = 4 at N = 10k
    // keeps it well inside 10%.
    std::mt19937_64 rng(3);
    const auto pts = gaussian_set(rng, 10000, 4, Eigen::VectorXd::Constant(4, 2.0));
    const auto pca = fit_pca(std::span<const Eigen::VectorXd>(pts));
    ASSERT_EQ(pca.variances.size(), 4);
    EXPECT_LE(pca.variances.maxCoeff(), 1.1 * pca.variances.minCoeff());
}

TEST(FitPca, OrthonormalDescendingAndDeterministic)
{
    std::mt19937_64 rng(4);
    Eigen::VectorXd scale = Eigen::VectorXd::LinSpaced(12, 5.0, 0.5);
    const auto pts = gaussian_set(rng, 200, 12, scale);
    const auto a = fit_pca(std::span<const Eigen::VectorXd>(pts));
    const auto b = fit_pca(std::span<const Eigen::VectorXd>(pts));
    EXPECT_EQ(a.components, b.components);
    EXPECT_EQ(a.mean, b.mean);
    const Eigen::MatrixXd gram = a.components.transpose() * a.components;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index k = 1; k < a.variances.size(); ++k)
        EXPECT_GE(a.variances(k - 1), a.variances(k));
    for (Eigen::Index k = 0; k < a.components.cols(); ++k)
    {
        Eigen::Index arg;
        a.components.col(k).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(a.components(arg, k), 0.0);
    }
}

TEST(FitPca, RejectsBadInput)
{
    std::mt19937_64 rng(5);
    const auto pts = gaussian_set(rng, 5, 3, Eigen::VectorXd::Ones(3));
    const std::span<const Eigen::VectorXd> s(pts);
    EXPECT_THROW(fit_pca(s, 0), std::invalid_argument);
    EXPECT_THROW(fit_pca(s, 4), std::invalid_argument);
    EXPECT_THROW(fit_pca(s.first(2), 2), std::invalid_argument);
    std::vector<Eigen::VectorXd> same(4, Eigen::Vector3d(1, 2, 3));
    EXPECT_THROW(fit_pca(std::span<const Eigen::VectorXd>(same)), std::invalid_argument);
    auto mixed = pts;
    mixed[2] = Eigen::Vector2d(1, 1);
    EXPECT_THROW(fit_pca(std::span<const Eigen::VectorXd>(mixed)), std::invalid_argument);
}

TEST(Embed, MeanGivesZeroAndSignedSqrt)
{
    std::mt19937_64 rng(6);
    const auto pts = gaussian_set(rng, 40, 5, Eigen::VectorXd::Ones(5));
    const auto pca = fit_pca(std::span<const Eigen::VectorXd>(pts));
    EXPECT_EQ(embed(pca.mean, pca).values, Eigen::VectorXd::Zero(5));

    const Descriptor d = embed(Eigen::Vector2d(4, -9), identity_pca(2));
    EXPECT_EQ(d.values, Eigen::Vector2d(2, -3));
    EXPECT_THROW(embed(Eigen::Vector3d(1, 2, 3), identity_pca(2)), std::invalid_argument);
}

TEST(Similarity, CosineCases)
{
    const Descriptor a = desc({1, 2, 3});
    EXPECT_DOUBLE_EQ(similarity(a, a), 1.0);
    EXPECT_EQ(similarity(desc({1, 0}), desc({0, 5})), 0.0);
    EXPECT_DOUBLE_EQ(similarity(a, desc({2.5, 5, 7.5})), 1.0);
    EXPECT_DOUBLE_EQ(similarity(a, desc({-2, -4, -6})), -1.0);
    EXPECT_THROW(similarity(a, desc({0, 0, 0})), std::invalid_argument);
    EXPECT_THROW(similarity(a, desc({1, 2})), std::invalid_argument);
}

TEST(Similarity, SymmetricAndScaleInvariant)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> c(0.01, 100.0);
    for (int trial = 0; trial < 500; ++trial)
    {
        Descriptor a{oracle::random_vector(rng, 20)}, b{oracle::random_vector(rng, 20)};
        const double s = similarity(a, b);
        ASSERT_EQ(similarity(b, a), s);
        ASSERT_GE(s, -1.0);
        ASSERT_LE(s, 1.0);
        const double k = c(rng);
        Descriptor ak{k * a.values}, bk{k * b.values};
        ASSERT_NEAR(similarity(ak, bk), s, 1e-14);
    }
}

TEST(ScorePairs, MatchesDirectSimilarity)
{
    const std::map<std::string, Descriptor> d{{"a", desc({1, 2})}, {"b", desc({2, -1})}, {"c", desc({1, 1})}};
    const std::vector<Pair> protocol{{"a", "a", true}, {"a", "c", false}};
    const auto s = score_pairs(protocol, d);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s[0].score, 1.0);
    EXPECT_TRUE(s[0].same);
    EXPECT_EQ(s[1].score, similarity(d.at("a"), d.at("c")));
    EXPECT_FALSE(s[1].same);
    EXPECT_TRUE(score_pairs(std::vector<Pair>{}, d).empty());
    try
    {
        score_pairs(std::vector<Pair>{{"a", "b", true}, {"a", "zz", false}}, d);
        FAIL() << "no exception";
    } catch (const std::out_of_range& e)
    {
        EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos) << e.what();
    }
}

TEST(TemplateDescriptors, VideoTemplateEqualsPooledGamma)
{
    std::mt19937_64 rng(8);
    std::vector<ParamVector> train;
    for (int i = 0; i < 60; ++i)
        train.push_back(oracle::random_params(rng, 6, 4));
    const auto pca = fit_pca(std::span<const ParamVector>(train));

    std::map<std::string, std::vector<pooling::TemplateItem>> templates;
    for (int t = 0; t < 20; ++t)
    {
        std::vector<pooling::TemplateItem> items;
        pooling::TemplateItem video{pooling::ItemKind::video, {}};
        for (int f = 0; f < 4; ++f)
            video.estimates.push_back({oracle::random_params(rng, 6, 4), 1.0});
        items.push_back(video);
        items.push_back({pooling::ItemKind::still_image, {{oracle::random_params(rng, 6, 4), 1.0}}});
        templates["t" + std::to_string(t)] = items;
    }
    const auto via_templates = template_descriptors(templates, pca);
    std::map<std::string, Descriptor> via_gamma;
    for (const auto& [id, items] : templates)
        via_gamma[id] = embed(pooling::pool_template(items), pca);

    std::vector<Pair> protocol;
    for (int a = 0; a < 20; ++a)
        for (int b = a + 1; b < 20; ++b)
            protocol.push_back({"t" + std::to_string(a), "t" + std::to_string(b), false});
    const auto s1 = score_pairs(protocol, via_templates);
    const auto s2 = score_pairs(protocol, via_gamma);
    for (std::size_t i = 0; i < s1.size(); ++i)
        ASSERT_NEAR(s1[i].score, s2[i].score, 1e-12);
}

TEST(MatchingFiles, PairsScoresTemplatesDescriptors)
{
    const auto dir = oracle::scratch_dir("match");
    const std::vector<Pair> pairs{{"a", "b", true}, {"a", "c", false}};
    write_pairs(dir / "p.csv", pairs);
    const auto p = read_pairs(dir / "p.csv");
    ASSERT_EQ(p.size(), 2u);
    EXPECT_TRUE(p[0].same);
    EXPECT_FALSE(p[1].same);
    EXPECT_EQ(p[1].id_b, "c");

    const ScoreSet scores{{"a", "b", true, 0.123456789012345678}, {"a", "c", false, -0.5}};
    write_scores(dir / "s.csv", scores);
    const auto s = read_scores(dir / "s.csv");
    EXPECT_EQ(s[0].score, scores[0].score);
    EXPECT_FALSE(s[1].same);

    std::ofstream(dir / "t.csv") << "template_id,item_id,kind\nT,v1,video\nT,i1,still\n";
    const std::map<std::string, std::vector<ParamVector>> est{
        {"v1", {ParamVector(Eigen::VectorXd::Constant(1, 0), Eigen::VectorXd::Constant(1, 0)),
                ParamVector(Eigen::VectorXd::Constant(1, 2), Eigen::VectorXd::Constant(1, 2))}},
        {"i1", {ParamVector(Eigen::VectorXd::Constant(1, 4), Eigen::VectorXd::Constant(1, 0))}}};
    const auto t = read_templates(dir / "t.csv", est);
    const ParamVector pooled = pooling::pool_template(t.at("T"));
    EXPECT_EQ(pooled.alpha(0), 2.5);
    EXPECT_EQ(pooled.beta(0), 0.5);

    std::ofstream(dir / "bad.csv") << "template_id,item_id,kind\nT,v1,still\n";
    EXPECT_THROW(read_templates(dir / "bad.csv", est), std::runtime_error);
    std::ofstream(dir / "lab.csv") << "id_a,id_b,label\na,b,maybe\n";
    EXPECT_THROW(read_pairs(dir / "lab.csv"), std::runtime_error);

    const std::map<std::string, Descriptor> d{{"x", desc({1.0 / 3.0, -2})}, {"y", desc({0.1, 7})}};
    write_descriptors(dir / "d.csv", d);
    const auto back = read_descriptors(dir / "d.csv");
    EXPECT_EQ(back.at("x").values, d.at("x").values);
    EXPECT_EQ(back.at("y").values, d.at("y").values);
    std::filesystem::remove_all(dir);
}
