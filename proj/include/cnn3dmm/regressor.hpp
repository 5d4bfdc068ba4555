/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/regressor.hpp
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
#include "cnn3dmm/model.hpp"

#include "Eigen/Core"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnn3dmm::regressor {

/// A contiguous slice of the flat parameter vector with its own optimiser settings.
struct ParameterGroup
{
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
    double lr_multiplier = 1.0;
    bool weight_decay = true;
};

/**
 * Interface the SGD trainer is written against.
 *
 * Parameters live in one flat vector; parameter_groups() partitions it. backward()
 * adds the gradient of a per-sample loss to `grad`, given the loss gradient with
 * respect to the regressor output.
 */
class Regressor
{
public:
    virtual ~Regressor() = default;

    virtual Eigen::Index input_dim() const = 0;
    virtual Eigen::Index output_dim() const = 0;
    /// Number of leading outputs that are shape coefficients.
    virtual Eigen::Index shape_dims() const = 0;

    virtual Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
    virtual void backward(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& d_output,
                          Eigen::Ref<Eigen::VectorXd> grad) const = 0;

    virtual Eigen::VectorXd& parameters() = 0;
    virtual const Eigen::VectorXd& parameters() const = 0;
    virtual std::vector<ParameterGroup> parameter_groups() const = 0;

    virtual std::unique_ptr<Regressor> clone() const = 0;
};

/**
 * Affine regression head: output = weights^T * x + bias, with weights of shape
 * input_dim x output_dim. Parameters are stored as [vec(weights) column-major, bias];
 * the bias group is excluded from weight decay.
 */
class LinearRegressor final : public Regressor
{
public:
    /// Zero-initialised.
    LinearRegressor(Eigen::Index input_dim, Eigen::Index output_dim, Eigen::Index shape_dims);

    Eigen::Index input_dim() const override { return input_dim_; }
    Eigen::Index output_dim() const override { return output_dim_; }
    Eigen::Index shape_dims() const override { return shape_dims_; }

    Eigen::Map<Eigen::MatrixXd> weights();
    Eigen::Map<const Eigen::MatrixXd> weights() const;
    Eigen::Map<Eigen::VectorXd> bias();
    Eigen::Map<const Eigen::VectorXd> bias() const;

    /// Learning-rate multiplier applied to both groups (1 by default).
    void set_lr_multiplier(double m) { lr_multiplier_ = m; }

    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
    void backward(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& d_output,
                  Eigen::Ref<Eigen::VectorXd> grad) const override;

    Eigen::VectorXd& parameters() override { return params_; }
    const Eigen::VectorXd& parameters() const override { return params_; }
    std::vector<ParameterGroup> parameter_groups() const override;

    std::unique_ptr<Regressor> clone() const override { return std::make_unique<LinearRegressor>(*this); }

private:
    Eigen::Index input_dim_;
    Eigen::Index output_dim_;
    Eigen::Index shape_dims_;
    double lr_multiplier_ = 1.0;
    Eigen::VectorXd params_;
};

/// Runs the regressor and splits its output into shape and texture coefficients.
ParamVector predict(const Regressor& reg, const Eigen::Ref<const Eigen::VectorXd>& features);

/**
 * Feature rows with per-sample targets. All samples of one subject carry the same
 * target (the subject's pooled estimate).
 */
struct Dataset
{
    Eigen::MatrixXd features;  ///< N x D_feat
    Eigen::MatrixXd targets;   ///< N x D_out
    std::vector<std::string> subject_ids;
    Eigen::Index shape_dims = kDefaultShapeDims;

    Eigen::Index size() const { return features.rows(); }
    /// Throws std::invalid_argument on inconsistent rows or per-subject targets.
    void validate() const;
};

struct TrainConfig
{
    std::size_t batch_size = 144;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double lr_head = 0.01;
    double lr_decay_factor = 0.1;
    int patience = 3;
    /// Training stops once the learning rate would drop below lr_head * lr_floor_ratio.
    double lr_floor_ratio = 1e-4;
    /// A validation loss counts as improved when below best * (1 - improvement_tolerance).
    double improvement_tolerance = 1e-9;
    int max_epochs = 100;
    std::uint64_t seed = 0;
    loss::LossConfig loss;

    void validate() const;
};

struct EpochRecord
{
    int epoch = 0;  ///< 0 is the evaluation before any update
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainLog
{
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    std::string stop_reason;
};

/// Raised when a loss becomes NaN or infinite; carries the offending epoch.
class DivergenceError : public std::runtime_error
{
public:
    DivergenceError(int epoch, const std::string& what) : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

/// Mean over samples of the coordinate-summed loss.
double mean_loss(const Regressor& reg, const Dataset& data, const loss::LossConfig& cfg);

/**
 * Mini-batch objective: mean loss over `rows` plus (weight_decay / 2) * |theta|^2
 * over the decayed parameter groups.
 */
double objective(const Regressor& reg, const Dataset& data, std::span<const Eigen::Index> rows,
                 const loss::LossConfig& cfg, double weight_decay);

/// Gradient of the mean loss over `rows` (without weight decay) w.r.t. the parameters.
Eigen::VectorXd loss_gradient(const Regressor& reg, const Dataset& data, std::span<const Eigen::Index> rows,
                              const loss::LossConfig& cfg);

/// Gradient of objective().
Eigen::VectorXd objective_gradient(const Regressor& reg, const Dataset& data, std::span<const Eigen::Index> rows,
                                   const loss::LossConfig& cfg, double weight_decay);

/**
 * One SGD step with momentum and decoupled weight decay, for every group g:
 *
 *     lr_g = lr * multiplier_g
 *     theta_g *= (1 - lr_g * weight_decay)        (decayed groups only)
 *     v_g = momentum * v_g - lr_g * grad_g
 *     theta_g += v_g
 */
void sgd_step(Regressor& reg, Eigen::VectorXd& velocity, const Eigen::Ref<const Eigen::VectorXd>& grad, double lr,
              const TrainConfig& cfg);

/**
 * Trains `reg` in place with shuffled mini-batch SGD. The learning rate is multiplied
 * by lr_decay_factor after `patience` epochs without validation improvement; training
 * ends at max_epochs or when the rate falls under the floor. The parameters of the
 * best validation epoch are restored at the end.
 *
 * Throws DivergenceError on a non-finite loss and std::invalid_argument on empty or
 * inconsistent data.
 */
TrainLog train(Regressor& reg, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

struct TrainResult
{
    LinearRegressor regressor;
    TrainLog log;
};

/// Trains a zero-initialised affine head.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

struct SyntheticTask
{
    Dataset train;
    Dataset val;
    Eigen::MatrixXd mixing;  ///< D_feat x D_out, features = mixing * gamma + noise
};

/**
 * Synthetic stand-in for an image/3DMM training set.
 *
 * Each subject draws gamma ~ N(0, diag(sigmas^2)); each of its images gets features
 * mixing * gamma + N(0, noise_sigma^2). Mixing rows are Gaussian, rescaled so every
 * noiseless feature has unit variance. The subject target is the equal-weight pool
 * of its images' noiseless gamma. The first ceil((1 - val_fraction) * N) subjects form
 * the training split.
 */
SyntheticTask make_synthetic_task(std::uint64_t seed, std::size_t num_subjects, std::size_t images_per_subject,
                                  Eigen::Index feature_dim, double noise_sigma,
                                  const Eigen::Ref<const Eigen::VectorXd>& shape_sigmas,
                                  const Eigen::Ref<const Eigen::VectorXd>& texture_sigmas, double val_fraction = 0.2);

// Features CSV: subject_id,f0..; targets CSV: subject_id,p0.. (one row per subject).
void write_dataset(const Dataset& data, const std::filesystem::path& features_csv,
                   const std::filesystem::path& targets_csv);
Dataset read_dataset(const std::filesystem::path& features_csv, const std::filesystem::path& targets_csv,
                     Eigen::Index shape_dims);
/// Features only; targets are left empty.
Dataset read_features(const std::filesystem::path& features_csv);

void write_train_log(const TrainLog& log, const std::filesystem::path& path);

// Checkpoint: "C3DR" container with float32 weights (column-major) and bias.
void save_checkpoint(const LinearRegressor& reg, const std::filesystem::path& path);
LinearRegressor load_checkpoint(const std::filesystem::path& path);

} // namespace cnn3dmm::regressor
