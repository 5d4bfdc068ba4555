/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tests/oracles.hpp
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

// Independent reference implementations and random generators shared by the unit
// tests and the acceptance binary. Nothing here calls into the library's numerics.

#include "cnn3dmm/metrics.hpp"
#include "cnn3dmm/model.hpp"

#include "Eigen/Cholesky"
#include "Eigen/Core"
#include "Eigen/Geometry"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace oracle {

inline Eigen::VectorXd naive_matvec(const Eigen::MatrixXd& a, const Eigen::VectorXd& x)
{
    Eigen::VectorXd y = Eigen::VectorXd::Zero(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
    {
        double s = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            s += a(i, j) * x(j);
        y(i) = s;
    }
    return y;
}

/// Affine least squares Y ~ [X 1] * B by the normal equations; B is (D + 1) x K, bias last.
inline Eigen::MatrixXd normal_equations_fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
{
    Eigen::MatrixXd a(x.rows(), x.cols() + 1);
    a << x, Eigen::VectorXd::Ones(x.rows());
    const Eigen::MatrixXd ata = a.transpose() * a;
    return ata.ldlt().solve(a.transpose() * y);
}

inline Eigen::MatrixXd affine_apply(const Eigen::MatrixXd& b, const Eigen::MatrixXd& x)
{
    return x * b.topRows(x.cols()) + Eigen::VectorXd::Ones(x.rows()) * b.bottomRows(1);
}

/// Scalar asymmetric loss written directly from the branch definitions.
inline double branch_loss(double pred, double target, double l_over, double l_under)
{
    const double s = target < 0.0 ? -1.0 : 1.0;
    const double t = std::abs(target);
    const double p = s * pred;
    return p > t ? l_over * (p - t) * (p - t) : l_under * (p - t) * (p - t);
}

struct Nearest
{
    std::size_t index;
    double squared_distance;
};

inline Nearest brute_nearest(const std::vector<Eigen::Vector3d>& points, const Eigen::Vector3d& q)
{
    Nearest best{0, (points[0] - q).squaredNorm()};
    for (std::size_t i = 1; i < points.size(); ++i)
    {
        const double d = (points[i] - q).squaredNorm();
        if (d < best.squared_distance)
            best = {i, d};
    }
    return best;
}

/// Probability that a positive outscores a negative, ties counted as one half.
inline double wilcoxon_auc(const std::vector<cnn3dmm::metrics::LabeledScore>& scores)
{
    double wins = 0.0;
    double pairs = 0.0;
    for (const auto& p : scores)
    {
        if (!p.positive)
            continue;
        for (const auto& n : scores)
        {
            if (n.positive)
                continue;
            pairs += 1.0;
            if (p.score > n.score)
                wins += 1.0;
            else if (p.score == n.score)
                wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Closed-form rotation from three axis-aligned Euler angles (radians).
inline Eigen::Matrix3d rotation_xyz(double ax, double ay, double az)
{
    return (Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

/// Rotation about a uniformly random axis by an angle uniform in [0, max_angle].
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng, double max_angle)
{
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, max_angle);
    Eigen::Vector3d axis(n(rng), n(rng), n(rng));
    axis.normalize();
    return Eigen::AngleAxisd(u(rng), axis).toRotationMatrix();
}

/// Uniform in the ball of the given radius.
inline Eigen::Vector3d random_in_ball(std::mt19937_64& rng, double radius)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Vector3d v;
    do
    {
        v = {u(rng), u(rng), u(rng)};
    } while (v.squaredNorm() > 1.0);
    return radius * v;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double sigma = 1.0)
{
    std::normal_distribution<double> g(0.0, sigma);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = g(rng);
    return v;
}

inline cnn3dmm::ParamVector random_params(std::mt19937_64& rng, Eigen::Index ks, Eigen::Index kt, double sigma = 1.0)
{
    return {random_vector(rng, ks, sigma), random_vector(rng, kt, sigma)};
}

/// Anisotropic point cloud with distinct principal axes so rigid registration is unambiguous.
inline std::vector<Eigen::Vector3d> random_cloud(std::mt19937_64& rng, std::size_t n)
{
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Eigen::Vector3d> pts(n);
    for (auto& p : pts)
        p = {40.0 * g(rng), 25.0 * g(rng), 12.0 * g(rng)};
    return pts;
}

/// Axis-aligned square [x0, x0 + side] x [y0, y0 + side] at height z, two triangles.
inline cnn3dmm::Mesh square(double x0, double y0, double side, double z)
{
    cnn3dmm::Mesh m;
    m.positions = {{x0, y0, z}, {x0 + side, y0, z}, {x0 + side, y0 + side, z}, {x0, y0 + side, z}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

/// (n + 1) x (n + 1) vertex grid with unit spacing at height z, two triangles per cell.
inline cnn3dmm::Mesh unit_grid(int n, double z = 0.0)
{
    cnn3dmm::Mesh m;
    for (int r = 0; r <= n; ++r)
        for (int c = 0; c <= n; ++c)
            m.positions.emplace_back(c, r, z);
    auto id = [n](int r, int c) { return static_cast<std::uint32_t>(r * (n + 1) + c); };
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
        {
            m.triangles.push_back({id(r, c), id(r, c + 1), id(r + 1, c + 1)});
            m.triangles.push_back({id(r, c), id(r + 1, c + 1), id(r + 1, c)});
        }
    return m;
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag)
{
    static int counter = 0;
    std::random_device rd;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("cnn3dmm_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace oracle
