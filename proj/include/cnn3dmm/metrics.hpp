/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/metrics.hpp
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

#include "cnn3dmm/mesh.hpp"

#include "Eigen/Core"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cnn3dmm::metrics {

/// x -> rotation * x + translation.
struct RigidTransform
{
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return rotation * x + translation; }
    /// (this * other)(x) = this(other(x)).
    RigidTransform operator*(const RigidTransform& other) const;
    RigidTransform inverse() const;
};

Mesh transformed(const Mesh& mesh, const RigidTransform& t);

/// Angle of the relative rotation a^T b, in radians.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/**
 * Least-squares rigid motion taking source[i] onto target[i] (Kabsch). A reflection
 * in the SVD solution is corrected so that det(R) = +1; planar sets are fine.
 *
 * Throws std::invalid_argument on fewer than 3 pairs, size mismatch or a
 * correspondence set of rank < 2 (collinear or coincident points).
 */
RigidTransform fit_rigid(std::span<const Eigen::Vector3d> source, std::span<const Eigen::Vector3d> target);

struct IcpOptions
{
    int max_iterations = 100;
    /// Stop once the RMS correspondence distance improves by less than this (mm).
    double tolerance = 1e-10;
    /// Translate the source centroid onto the target centroid before iterating.
    bool center_first = true;
};

struct IcpResult
{
    RigidTransform transform;  ///< maps the original source onto the target
    Mesh aligned;
    /// RMS nearest-neighbour distance; entry 0 is before the first update.
    std::vector<double> residuals;
    bool converged = false;
};

/**
 * Rigid ICP: nearest-neighbour correspondences from source to target (k-d tree)
 * alternated with fit_rigid(). A step that would raise the residual is rejected and
 * ends the iteration, so `residuals` never increases.
 *
 * Throws std::invalid_argument on empty meshes or a collinear target.
 */
IcpResult icp_align(const Mesh& source, const Mesh& target, const IcpOptions& options = {});

/**
 * Keeps vertices within `radius` (inclusive) of vertex `center`, drops triangles that
 * lose a vertex and remaps indices in the original order.
 *
 * Throws std::out_of_range on a bad index, std::invalid_argument on a non-positive
 * radius, or when `require_triangles` is set and no triangle survives.
 */
Mesh crop_radius(const Mesh& mesh, std::uint32_t center, double radius, bool require_triangles = true);

/**
 * Frontal orthographic depth image. The camera sits at +Z looking down -Z, so the
 * larger z wins. Row 0 is the top (largest y); pixel (r, c) samples the point
 *
 *     x = origin.x + (c + 0.5 - width / 2) * pixel_scale
 *     y = origin.y - (r + 0.5 - height / 2) * pixel_scale
 *
 * Invalid pixels hold NaN.
 */
struct DepthMap
{
    int width = 0;
    int height = 0;
    double pixel_scale = 1.0;
    Eigen::Vector2d origin = Eigen::Vector2d::Zero();
    std::vector<double> depth;  ///< row-major

    double at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
    bool valid(int row, int col) const;
    std::size_t valid_count() const;
};

/**
 * Rasterises all triangles. `center` defaults to the XY centroid of the vertices.
 *
 * Throws std::invalid_argument if the mesh has no triangles or the size is not
 * positive, std::runtime_error if no pixel is covered.
 */
DepthMap render_depth(const Mesh& mesh, int width, int height, double pixel_scale,
                      std::optional<Eigen::Vector2d> center = std::nullopt);

/// For every estimate vertex, the position of its nearest ground-truth vertex.
std::vector<Eigen::Vector3d> resample_nearest(const Mesh& estimate, const Mesh& ground_truth);

/**
 * sqrt(mean |x_i - y_i|^2). With `literal` set, sqrt(sum |x_i - y_i|^2) / N instead.
 * Throws std::invalid_argument on empty or mismatched sets.
 */
double rmse3d(std::span<const Eigen::Vector3d> x, std::span<const Eigen::Vector3d> y, bool literal = false);

struct ShapeErrors
{
    double rmse3d = 0.0;
    double rmse = 0.0;
    double log10 = 0.0;
    double rel = 0.0;
};

/**
 * Point errors over corresponding vertices and depth errors over pixels valid in both
 * maps; `d` is the estimate, `d_star` the ground truth.
 *
 * Throws std::invalid_argument on mismatched sizes, no jointly valid pixel, or a
 * non-positive depth among the jointly valid pixels.
 */
ShapeErrors shape_errors(std::span<const Eigen::Vector3d> x, std::span<const Eigen::Vector3d> x_star,
                         const DepthMap& d, const DepthMap& d_star, bool literal = false);

struct ShapeEvalOptions
{
    double crop_radius = 95.0;
    int width = 128;
    int height = 128;
    double pixel_scale = 1.6;
    bool literal_rmse3d = false;
    /// Crop centre for both meshes; by default each mesh's first maximal-z vertex.
    std::optional<std::uint32_t> nose_index;
    IcpOptions icp;
};

struct ShapeEvaluation
{
    ShapeErrors errors;
    IcpResult icp;
    DepthMap estimate_depth;
    DepthMap ground_truth_depth;
};

/**
 * Crop both meshes around the nose tip, align the estimate to the ground truth with
 * ICP, pair every estimate vertex with its nearest ground-truth vertex and render both
 * crops around the ground-truth crop centroid.
 */
ShapeEvaluation evaluate_shape(const Mesh& estimate, const Mesh& ground_truth, const ShapeEvalOptions& options = {});

/**
 * 16-bit ASCII PGM (P2). Grey 0 marks invalid pixels; otherwise
 * z = z_offset + (grey - 1) * quantum. A JSON sidecar `<path>.json` stores width,
 * height, pixel_scale, origin, z_offset and quantum.
 */
void write_depth_pgm(const DepthMap& map, const std::filesystem::path& path);
DepthMap read_depth_pgm(const std::filesystem::path& path);

struct LabeledScore
{
    double score = 0.0;
    bool positive = false;
};

/// Operating point when accepting every score >= threshold.
struct RocPoint
{
    double threshold = 0.0;
    double far = 0.0;
    double tar = 0.0;
};

/**
 * One point per distinct score in descending order, preceded by (0, 0) at
 * threshold +inf. Throws std::invalid_argument on single-class or non-finite input.
 */
std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores);

/// Trapezoidal area under a curve from roc_curve().
double auc(std::span<const RocPoint> roc);

/// Largest TAR at exactly `far` if the curve visits it, else linear interpolation.
double tar_at_far(std::span<const RocPoint> roc, double far);

/// Linear interpolation where FAR - FRR changes sign.
double equal_error_rate(std::span<const RocPoint> roc);

struct VerificationMetrics
{
    double accuracy = 0.0;  ///< best over all thresholds
    double eer = 0.0;
    double auc = 0.0;
    double tar_at_far_10 = 0.0;
    double tar_at_far_1 = 0.0;
};

VerificationMetrics verification_metrics(std::span<const LabeledScore> scores);

/// One probe-to-gallery comparison; the gallery id doubles as the gallery identity.
struct IdentificationScore
{
    std::string probe_id;
    std::string probe_identity;
    std::string gallery_id;
    double score = 0.0;
};

/**
 * rates[k - 1] is the fraction of probes whose mate ranks within k, for k = 1..G with
 * G the number of distinct gallery ids. Ranking is by descending score, ties broken by
 * ascending gallery id.
 *
 * Throws std::invalid_argument on a probe without a mate, a repeated probe/gallery
 * pair, inconsistent probe identities or non-finite scores.
 */
std::vector<double> cmc(std::span<const IdentificationScore> scores);

// Identification CSV: probe_id,probe_identity,gallery_id,score.
std::vector<IdentificationScore> read_identification(const std::filesystem::path& path);
void write_identification(const std::filesystem::path& path, std::span<const IdentificationScore> scores);

} // namespace cnn3dmm::metrics
