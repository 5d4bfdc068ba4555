/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/kdtree.cpp
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
#include "cnn3dmm/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cnn3dmm {

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points))
{
    if (points_.empty())
        throw std::invalid_argument("KdTree: no points");
    if (points_.size() > std::numeric_limits<std::int32_t>::max())
        throw std::invalid_argument("KdTree: too many points");
    for (const auto& p : points_)
        if (!p.allFinite())
            throw std::invalid_argument("KdTree: non-finite point");
    std::vector<std::uint32_t> order(points_.size());
    std::iota(order.begin(), order.end(), 0u);
    nodes_.reserve(points_.size());
    root_ = build(order, 0, order.size());
}

std::int32_t KdTree::build(std::vector<std::uint32_t>& order, std::size_t begin, std::size_t end)
{
    if (begin >= end)
        return -1;
    Eigen::Vector3d lo = points_[order[begin]], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i)
    {
        lo = lo.cwiseMin(points_[order[i]]);
        hi = hi.cwiseMax(points_[order[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(mid),
                     order.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = points_[a](axis), pb = points_[b](axis);
                         return pa < pb || (pa == pb && a < b);
                     });

    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({order[mid], axis, -1, -1});
    const std::int32_t left = build(order, begin, mid);
    const std::int32_t right = build(order, mid + 1, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

void KdTree::search(std::int32_t node, const Eigen::Vector3d& q, Hit& best) const
{
    while (node >= 0)
    {
        const Node& n = nodes_[static_cast<std::size_t>(node)];
        const Eigen::Vector3d& p = points_[n.point];
        const double d = (p - q).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && n.point < best.index))
            best = {n.point, d};

        const double diff = q(n.axis) - p(n.axis);
        const std::int32_t near = diff < 0.0 ? n.left : n.right;
        const std::int32_t far = diff < 0.0 ? n.right : n.left;
        search(near, q, best);
        // <= keeps equidistant candidates on the far side reachable for the index tie-break.
        if (diff * diff <= best.squared_distance)
            node = far;
        else
            node = -1;
    }
}

KdTree::Hit KdTree::nearest(const Eigen::Vector3d& query) const
{
    Hit best{std::numeric_limits<std::uint32_t>::max(), std::numeric_limits<double>::infinity()};
    search(root_, query, best);
    return best;
}

} // namespace cnn3dmm
