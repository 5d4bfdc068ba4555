/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/matching.hpp
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
#pragma once

#include "cnn3dmm/model.hpp"
#include "cnn3dmm/pooling.hpp"

#include "Eigen/Core"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cnn3dmm::matching {

/**
 * Benchmark adaptation: centre on the training mean and project onto the leading
 * principal directions. Fitting and applying are separate so that only training
 * split vectors ever reach fit_pca().
 */
struct PcaTransform
{
    Eigen::VectorXd mean;        ///< D
    Eigen::MatrixXd components;  ///< D x M, orthonormal columns
    Eigen::VectorXd variances;   ///< M eigenvalues, descending
};

/**
 * PCA of the sample covariance. With `dims` unset, M = min(D, N - 1) further limited
 * to eigenvalues above 1e-12 of the largest. Each component is signed so that its
 * largest-magnitude entry is positive.
 *
 * Throws std::invalid_argument if N <= M, M < 1, M > D, or the vectors differ in size.
 */
PcaTransform fit_pca(std::span<const Eigen::VectorXd> training, std::optional<Eigen::Index> dims = std::nullopt);
PcaTransform fit_pca(std::span<const ParamVector> training, std::optional<Eigen::Index> dims = std::nullopt);

struct Descriptor
{
    Eigen::VectorXd values;
};

/// components^T (gamma - mean), followed by the signed square root sign(p) sqrt(|p|).
Descriptor embed(const Eigen::Ref<const Eigen::VectorXd>& gamma, const PcaTransform& pca);
Descriptor embed(const ParamVector& gamma, const PcaTransform& pca);

/// Cosine of the angle between two descriptors. Throws on zero norm or size mismatch.
double similarity(const Descriptor& a, const Descriptor& b);

struct Pair
{
    std::string id_a;
    std::string id_b;
    bool same = false;
};

struct ScoredPair
{
    std::string id_a;
    std::string id_b;
    bool same = false;
    double score = 0.0;
};

/// Verification scores, in protocol order.
using ScoreSet = std::vector<ScoredPair>;

/// Throws std::out_of_range naming the pair index if an id has no descriptor.
ScoreSet score_pairs(std::span<const Pair> protocol, const std::map<std::string, Descriptor>& descriptors);

/// Pools each template (two-stage) and embeds the result.
std::map<std::string, Descriptor> template_descriptors(const std::map<std::string, std::vector<pooling::TemplateItem>>& templates,
                                                       const PcaTransform& pca);

// PairList CSV: id_a,id_b,label with label in {same, diff}.
std::vector<Pair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs);

// ScoreSet CSV: id_a,id_b,label,score.
void write_scores(const std::filesystem::path& path, const ScoreSet& scores);
ScoreSet read_scores(const std::filesystem::path& path);

/**
 * Template definition CSV: template_id,item_id,kind. Builds templates from per-item
 * estimates: a still item takes the single estimate stored under item_id, a video
 * item takes every estimate stored under item_id as its frames.
 */
std::map<std::string, std::vector<pooling::TemplateItem>> read_templates(
    const std::filesystem::path& path, const std::map<std::string, std::vector<ParamVector>>& item_estimates);

// Descriptor CSV: id,d0..d{M-1}.
void write_descriptors(const std::filesystem::path& path, const std::map<std::string, Descriptor>& descriptors);
std::map<std::string, Descriptor> read_descriptors(const std::filesystem::path& path);

} // namespace cnn3dmm::matching
