/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/kdtree.hpp
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

#include <cstdint>
#include <vector>

namespace cnn3dmm {

/**
 * Static k-d tree over 3D points for exact nearest-neighbour queries.
 *
 * Among equidistant points the lowest index is returned, so queries are
 * deterministic regardless of tree layout.
 */
class KdTree
{
public:
    struct Hit
    {
        std::uint32_t index = 0;
        double squared_distance = 0.0;
    };

    /// Copies the points. Throws std::invalid_argument if empty or non-finite.
    explicit KdTree(std::vector<Eigen::Vector3d> points);

    Hit nearest(const Eigen::Vector3d& query) const;

    std::size_t size() const { return points_.size(); }
    const std::vector<Eigen::Vector3d>& points() const { return points_; }

private:
    struct Node
    {
        std::uint32_t point = 0;
        int axis = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
    };

    std::int32_t build(std::vector<std::uint32_t>& order, std::size_t begin, std::size_t end);
    void search(std::int32_t node, const Eigen::Vector3d& q, Hit& best) const;

    std::vector<Eigen::Vector3d> points_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

} // namespace cnn3dmm
