/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/mesh.hpp
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

#include "Eigen/Core"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cnn3dmm {

using Triangle = std::array<std::uint32_t, 3>;

/**
 * A triangle mesh with optional per-vertex RGB colour.
 *
 * Positions are in millimetres, colours in [0, 255]. An empty colour list means
 * the mesh carries geometry only.
 */
struct Mesh
{
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> colors;
    std::vector<Triangle> triangles;

    std::size_t num_vertices() const { return positions.size(); }
    bool has_colors() const { return !colors.empty(); }

    /// Throws std::invalid_argument if colours or triangle indices are inconsistent.
    void validate() const;
};

/// Mean of all vertex positions.
Eigen::Vector3d centroid(const Mesh& mesh);

/// Index of the first vertex with maximal z. Throws on an empty mesh.
std::uint32_t max_z_vertex(const Mesh& mesh);

// ASCII PLY with double xyz, optional uchar RGB and triangle faces.
void write_ply(const Mesh& mesh, const std::filesystem::path& path);
Mesh read_ply(const std::filesystem::path& path);

} // namespace cnn3dmm
