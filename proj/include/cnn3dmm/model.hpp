/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/model.hpp
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
#include "Eigen/QR"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cnn3dmm {

inline constexpr Eigen::Index kDefaultShapeDims = 99;
inline constexpr Eigen::Index kDefaultTextureDims = 99;

/**
 * A 3DMM code: shape coefficients followed by texture coefficients.
 *
 * Coefficients are raw (not divided by the component standard deviations) unless
 * a caller explicitly converts with whiten().
 */
struct ParamVector
{
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;

    ParamVector() = default;
    ParamVector(Eigen::VectorXd alpha, Eigen::VectorXd beta);

    static ParamVector zeros(Eigen::Index shape_dims, Eigen::Index texture_dims);

    /// Splits a concatenated [alpha, beta] vector after the first shape_dims entries.
    static ParamVector from_concatenated(const Eigen::Ref<const Eigen::VectorXd>& gamma,
                                         Eigen::Index shape_dims);

    Eigen::Index size() const { return alpha.size() + beta.size(); }
    Eigen::VectorXd concatenated() const;
    bool all_finite() const;
};

/**
 * Linear statistical shape and texture model.
 *
 * A face is mean + basis * coefficients, separately for shape (xyz, mm) and
 * texture (rgb). Both vectors are stored per-vertex interleaved, i.e. entry 3*v+c
 * is coordinate/channel c of vertex v. The object is immutable once constructed.
 */
class MorphableModel
{
public:
    /// Validates all invariants and throws std::invalid_argument on violation.
    MorphableModel(Eigen::VectorXd mean_shape, Eigen::VectorXd mean_texture, Eigen::MatrixXd shape_basis,
                   Eigen::MatrixXd texture_basis, Eigen::VectorXd shape_sigmas,
                   Eigen::VectorXd texture_sigmas, std::vector<Triangle> triangles,
                   std::map<std::string, std::uint32_t> landmarks);

    Eigen::Index num_vertices() const { return mean_shape_.size() / 3; }
    Eigen::Index shape_dims() const { return shape_basis_.cols(); }
    Eigen::Index texture_dims() const { return texture_basis_.cols(); }

    const Eigen::VectorXd& mean_shape() const { return mean_shape_; }
    const Eigen::VectorXd& mean_texture() const { return mean_texture_; }
    const Eigen::MatrixXd& shape_basis() const { return shape_basis_; }
    const Eigen::MatrixXd& texture_basis() const { return texture_basis_; }
    const Eigen::VectorXd& shape_sigmas() const { return shape_sigmas_; }
    const Eigen::VectorXd& texture_sigmas() const { return texture_sigmas_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const std::map<std::string, std::uint32_t>& landmarks() const { return landmarks_; }

    /// Throws std::out_of_range for unknown landmark names.
    std::uint32_t landmark(std::string_view name) const;
    std::uint32_t nose_tip() const { return landmark("nose_tip"); }

    // Least-squares solvers for the two bases, factorised once at construction.
    const Eigen::HouseholderQR<Eigen::MatrixXd>& shape_solver() const { return *shape_qr_; }
    const Eigen::HouseholderQR<Eigen::MatrixXd>& texture_solver() const { return *texture_qr_; }

private:
    Eigen::VectorXd mean_shape_;
    Eigen::VectorXd mean_texture_;
    Eigen::MatrixXd shape_basis_;
    Eigen::MatrixXd texture_basis_;
    Eigen::VectorXd shape_sigmas_;
    Eigen::VectorXd texture_sigmas_;
    std::vector<Triangle> triangles_;
    std::map<std::string, std::uint32_t> landmarks_;
    std::shared_ptr<const Eigen::HouseholderQR<Eigen::MatrixXd>> shape_qr_;
    std::shared_ptr<const Eigen::HouseholderQR<Eigen::MatrixXd>> texture_qr_;
};

/**
 * Evaluates the linear model: positions = mean_shape + shape_basis * alpha and
 * colours = clamp(mean_texture + texture_basis * beta, 0, 255).
 *
 * Throws std::invalid_argument when the coefficient counts do not match the model.
 */
Mesh synthesize(const MorphableModel& model, const ParamVector& params);

/// The mean face, identical to synthesize() with zero coefficients.
Mesh mean_mesh(const MorphableModel& model);

/**
 * Least-squares coefficients reproducing the mesh. Beta is zero when the mesh has
 * no colours.
 */
ParamVector project(const MorphableModel& model, const Mesh& mesh);

// Conversion between raw coefficients and multiples of the component standard deviation.
ParamVector whiten(const MorphableModel& model, const ParamVector& raw);
ParamVector unwhiten(const MorphableModel& model, const ParamVector& whitened);

/// Draws raw coefficients from the zero-mean Gaussian prior with the model's sigmas.
ParamVector sample_prior(const MorphableModel& model, std::mt19937_64& rng);

/**
 * A deterministic stand-in for a licensed face model.
 *
 * The mean shape is a grid of vertices draped over an ellipsoidal dome (z grows
 * toward the centre, a small nose bump on top), triangulated two triangles per grid
 * cell. Bases are seeded Gaussian matrices orthonormalised by QR, sigmas decay as
 * 1/sqrt(k+1). The "nose_tip" landmark is the first vertex of maximal mean z.
 */
MorphableModel generate_synthetic_model(std::uint64_t seed, Eigen::Index num_vertices,
                                        Eigen::Index shape_dims = kDefaultShapeDims,
                                        Eigen::Index texture_dims = kDefaultTextureDims);

// Model container: JSON header followed by little-endian float32/uint32 arrays.
void save_model(const MorphableModel& model, const std::filesystem::path& path);
MorphableModel load_model(const std::filesystem::path& path);

} // namespace cnn3dmm
