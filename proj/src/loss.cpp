/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/loss.cpp
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
#include "cnn3dmm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace cnn3dmm::loss {

namespace {

inline double sign_of(double x)
{
    return x < 0.0 ? -1.0 : 1.0;
}

void check_inputs(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target,
                  const LossConfig& cfg)
{
    cfg.validate();
    if (pred.size() != target.size())
        throw std::invalid_argument("loss: prediction has " + std::to_string(pred.size()) + " entries, target has " +
                                    std::to_string(target.size()));
    if (!pred.allFinite() || !target.allFinite())
        throw std::invalid_argument("loss: non-finite input");
}

} // namespace

void LossConfig::validate() const
{
    if (!std::isfinite(lambda_over) || !std::isfinite(lambda_under) || lambda_over < 0.0 || lambda_under < 0.0)
        throw std::invalid_argument("loss weights must be finite and non-negative");
    if (lambda_over == 0.0 && lambda_under == 0.0)
        throw std::invalid_argument("loss weights must not both be zero");
}

double asymmetric_loss(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target,
                       const LossConfig& cfg)
{
    check_inputs(pred, target, cfg);
    double over = 0.0, under = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i)
    {
        const double t = std::abs(target(i));
        const double p = sign_of(target(i)) * pred(i);
        const double m = std::max(t, p);
        over += (t - m) * (t - m);
        under += (p - m) * (p - m);
    }
    return cfg.lambda_over * over + cfg.lambda_under * under;
}

double asymmetric_loss(const ParamVector& pred, const ParamVector& target, const LossConfig& cfg)
{
    return asymmetric_loss(pred.concatenated(), target.concatenated(), cfg);
}

Eigen::VectorXd asymmetric_loss_grad(const Eigen::Ref<const Eigen::VectorXd>& pred,
                                     const Eigen::Ref<const Eigen::VectorXd>& target, const LossConfig& cfg)
{
    check_inputs(pred, target, cfg);
    Eigen::VectorXd grad(pred.size());
    for (Eigen::Index i = 0; i < pred.size(); ++i)
    {
        const double s = sign_of(target(i));
        const double t = std::abs(target(i));
        const double p = s * pred(i);
        if (p > t)
            grad(i) = 2.0 * cfg.lambda_over * (p - t) * s;
        else if (p < t)
            grad(i) = 2.0 * cfg.lambda_under * (p - t) * s;
        else
            grad(i) = 0.0;
    }
    return grad;
}

Eigen::VectorXd asymmetric_loss_grad(const ParamVector& pred, const ParamVector& target, const LossConfig& cfg)
{
    return asymmetric_loss_grad(pred.concatenated(), target.concatenated(), cfg);
}

double euclidean_loss(const Eigen::Ref<const Eigen::VectorXd>& pred, const Eigen::Ref<const Eigen::VectorXd>& target)
{
    if (pred.size() != target.size())
        throw std::invalid_argument("euclidean_loss: size mismatch");
    return (pred - target).squaredNorm();
}

GradCheckReport gradient_check(std::uint64_t seed, Eigen::Index dims, std::size_t points, const LossConfig& cfg,
                               double h, double kink_margin)
{
    cfg.validate();
    if (dims < 1 || !(h > 0.0))
        throw std::invalid_argument("gradient_check: dims must be >= 1 and h > 0");
    // A central difference straddles the kink whenever the point is closer than h.
    const double margin = std::max(kink_margin, 2.0 * h);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    GradCheckReport report;
    Eigen::VectorXd pred(dims), target(dims);
    Eigen::VectorXd one_pred(1), one_target(1);
    while (report.points_checked < points)
    {
        for (Eigen::Index i = 0; i < dims; ++i)
        {
            target(i) = uniform(rng) < 0.05 ? 0.0 : normal(rng);
            pred(i) = target(i) + normal(rng);
        }
        bool near_kink = false;
        for (Eigen::Index i = 0; i < dims && !near_kink; ++i)
            near_kink = std::abs(sign_of(target(i)) * pred(i) - std::abs(target(i))) < margin;
        if (near_kink)
        {
            ++report.points_rejected;
            continue;
        }

        const Eigen::VectorXd analytic = asymmetric_loss_grad(pred, target, cfg);
        for (Eigen::Index i = 0; i < dims; ++i)
        {
            // The loss is a sum of per-coordinate terms, so each partial derivative only
            // needs that coordinate's term; this keeps cancellation error at O(eps/h).
            one_target(0) = target(i);
            one_pred(0) = pred(i) + h;
            const double up = asymmetric_loss(one_pred, one_target, cfg);
            one_pred(0) = pred(i) - h;
            const double down = asymmetric_loss(one_pred, one_target, cfg);
            const double numeric = (up - down) / (2.0 * h);
            const double scale = std::max(std::abs(analytic(i)), std::abs(numeric));
            const double err = scale > 0.0 ? std::abs(analytic(i) - numeric) / scale : 0.0;
            report.max_relative_error = std::max(report.max_relative_error, err);
        }
        ++report.points_checked;
    }
    return report;
}

} // namespace cnn3dmm::loss
