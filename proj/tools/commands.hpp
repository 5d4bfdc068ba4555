/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tools/commands.hpp
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

#include "cnn3dmm/loss.hpp"
#include "cnn3dmm/metrics.hpp"
#include "cnn3dmm/model.hpp"
#include "cnn3dmm/regressor.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cnn3dmm::cli {

/// A precondition on the command line itself; reported with exit code 2.
class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct MakeModelOptions
{
    std::string out;
    std::uint64_t seed = 0;
    long vertices = 2500;
    long shape_dims = kDefaultShapeDims;
    long texture_dims = kDefaultTextureDims;
    std::string mean_ply;
};
void make_model(const MakeModelOptions& o, std::ostream& log);

struct SynthOptions
{
    std::string model;
    std::string out;
    std::string params;
    std::string id;
    bool random = false;
    bool whitened = false;
    std::uint64_t seed = 0;
};
void synth(const SynthOptions& o, std::ostream& log);

struct PoolOptions
{
    std::string estimates;
    std::string out;
    std::string mode = "weighted";
    long shape_dims = kDefaultShapeDims;
};
void pool(const PoolOptions& o, std::ostream& log);

struct MakeTaskOptions
{
    std::string model;
    std::string out_dir;
    std::uint64_t seed = 0;
    long subjects = 250;
    long images_per_subject = 8;
    long feature_dim = 64;
    double noise = 0.0;
    double val_fraction = 0.2;
};
void make_task(const MakeTaskOptions& o, std::ostream& log);

struct TrainOptions
{
    std::string train_features;
    std::string train_targets;
    std::string val_features;
    std::string val_targets;
    std::string out;
    std::string log;
    long shape_dims = kDefaultShapeDims;
    regressor::TrainConfig config;
};
void train(const TrainOptions& o, std::ostream& log);

struct MatchOptions
{
    // Estimate sources, exactly one of these.
    std::string descriptors;
    std::string params;
    std::string estimates;
    std::string checkpoint;
    std::string features;

    // PCA fitted on training-split estimates.
    std::string pca_features;
    std::string pca_params;
    long pca_dims = 0;  ///< 0 = automatic

    std::string templates;
    std::string pairs;
    std::string out;
    std::string probes;
    std::string gallery_templates;
    std::string identification_out;
    std::string write_descriptors;
    long shape_dims = kDefaultShapeDims;
};
void match(const MatchOptions& o, std::ostream& log);

struct EvalOptions
{
    std::string estimate;
    std::string ground_truth;
    std::string scores;
    std::string identification;
    std::string out;
    std::string depth_out;
    std::vector<int> ranks{1, 5, 10};
    bool pretty = false;
    metrics::ShapeEvalOptions shape;
    long nose_index = -1;
};
void eval(const EvalOptions& o, std::ostream& out, std::ostream& log);

struct GradcheckOptions
{
    std::uint64_t seed = 0;
    long dims = 2 * kDefaultShapeDims;
    long points = 10000;
    double h = 1e-5;
    double kink_margin = 1e-6;
    double threshold = 1e-5;
    loss::LossConfig loss;
};
/// Returns false when the check fails.
bool gradcheck(const GradcheckOptions& o, std::ostream& out);

} // namespace cnn3dmm::cli
