/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/loss.hpp
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

#include "Eigen/Core"

#include <cstdint>

namespace cnn3dmm::loss {

/**
 * Weights of the two halves of the asymmetric Euclidean loss.
 *
 * lambda_over scales errors where the prediction lies further from the origin than
 * the target, lambda_under errors where it falls short. (1, 1) is the plain
 * squared Euclidean distance.
 */
struct LossConfig
{
    double lambda_over = 1.0;
    double lambda_under = 3.0;

    /// Throws std::invalid_argument unless both are finite, non-negative and not both zero.
    void validate() const;

    static LossConfig euclidean() { return {1.0, 1.0}; }
};

/**
 * Asymmetric Euclidean loss, summed over coordinates.
 *
 * Per coordinate, with s = sign(target) and sign(0) = +1:
 *
 *     t = |target|, p = s * pred, m = max(t, p)
 *     loss = lambda_over * (t - m)^2 + lambda_under * (p - m)^2
 *
 * Throws std::invalid_argument on size mismatch or non-finite input.
 */
double asymmetric_loss(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target,
                       const LossConfig& cfg);
double asymmetric_loss(const ParamVector& pred, const ParamVector& target, const LossConfig& cfg);

/**
 * Gradient of asymmetric_loss() with respect to pred. At the kink p == t the
 * subgradient 0 is returned.
 */
Eigen::VectorXd asymmetric_loss_grad(const Eigen::Ref<const Eigen::VectorXd>& pred,
                                     const Eigen::Ref<const Eigen::VectorXd>& target, const LossConfig& cfg);
Eigen::VectorXd asymmetric_loss_grad(const ParamVector& pred, const ParamVector& target, const LossConfig& cfg);

/// Squared Euclidean distance, the lambda = (1, 1) baseline.
double euclidean_loss(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target);

/// Result of comparing the analytic gradient to central finite differences.
struct GradCheckReport
{
    double max_relative_error = 0.0;
    std::size_t points_checked = 0;
    std::size_t points_rejected = 0;  ///< sampled too close to a kink
};

/**
 * Samples random (pred, target) pairs of the given dimension, skips points with any
 * coordinate within max(kink_margin, 2h) of a kink, and compares every gradient entry
 * to a central difference with step h. Relative error is |a - n| / max(|a|, |n|).
 */
GradCheckReport gradient_check(std::uint64_t seed, Eigen::Index dims, std::size_t points, const LossConfig& cfg,
                               double h = 1e-5, double kink_margin = 1e-6);

} // namespace cnn3dmm::loss
