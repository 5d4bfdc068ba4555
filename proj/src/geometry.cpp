/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/geometry.cpp
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
#include "cnn3dmm/metrics.hpp"

#include "Eigen/Geometry"
#include "Eigen/SVD"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cnn3dmm::metrics {

RigidTransform RigidTransform::operator*(const RigidTransform& other) const
{
    return {rotation * other.rotation, rotation * other.translation + translation};
}

RigidTransform RigidTransform::inverse() const
{
    return {rotation.transpose(), -(rotation.transpose() * translation)};
}

Mesh transformed(const Mesh& mesh, const RigidTransform& t)
{
    Mesh out = mesh;
    for (auto& p : out.positions)
        p = t.apply(p);
    return out;
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b)
{
    return Eigen::AngleAxisd(Eigen::Matrix3d(a.transpose() * b)).angle();
}

RigidTransform fit_rigid(std::span<const Eigen::Vector3d> source, std::span<const Eigen::Vector3d> target)
{
    if (source.size() != target.size())
        throw std::invalid_argument("fit_rigid: " + std::to_string(source.size()) + " source points but " +
                                    std::to_string(target.size()) + " target points");
    if (source.size() < 3)
        throw std::invalid_argument("fit_rigid: need at least 3 correspondences");

    const double n = static_cast<double>(source.size());
    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i)
    {
        cs += source[i];
        ct += target[i];
    }
    cs /= n;
    ct /= n;
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < source.size(); ++i)
        h += (source[i] - cs) * (target[i] - ct).transpose();
    if (!h.allFinite())
        throw std::invalid_argument("fit_rigid: non-finite points");

    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
        throw std::invalid_argument("fit_rigid: degenerate correspondence set (collinear or coincident points)");

    const Eigen::Matrix3d& u = svd.matrixU();
    const Eigen::Matrix3d& v = svd.matrixV();
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((v * u.transpose()).determinant() < 0.0)
        d(2, 2) = -1.0;
    RigidTransform t;
    t.rotation = v * d * u.transpose();
    t.translation = ct - t.rotation * cs;
    return t;
}

namespace {

double rms_to(const KdTree& tree, const std::vector<Eigen::Vector3d>& points, std::vector<Eigen::Vector3d>* matched)
{
    double sum = 0.0;
    if (matched)
        matched->resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
    {
        const auto hit = tree.nearest(points[i]);
        sum += hit.squared_distance;
        if (matched)
            (*matched)[i] = tree.points()[hit.index];
    }
    return std::sqrt(sum / static_cast<double>(points.size()));
}

bool collinear(const std::vector<Eigen::Vector3d>& points)
{
    if (points.size() < 3)
        return true;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (const auto& p : points)
        c += p;
    c /= static_cast<double>(points.size());
    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    for (const auto& p : points)
        s += (p - c) * (p - c).transpose();
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(s);
    const Eigen::Vector3d sv = svd.singularValues();
    return !(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0);
}

} // namespace

IcpResult icp_align(const Mesh& source, const Mesh& target, const IcpOptions& options)
{
    if (source.positions.empty() || target.positions.empty())
        throw std::invalid_argument("icp_align: empty mesh");
    if (options.max_iterations < 0 || !(options.tolerance >= 0.0))
        throw std::invalid_argument("icp_align: max_iterations and tolerance must be non-negative");
    if (collinear(target.positions))
        throw std::invalid_argument("icp_align: target needs at least 3 non-collinear points");

    const KdTree tree(target.positions);
    IcpResult result;
    if (options.center_first)
        result.transform.translation = centroid(target) - centroid(source);

    std::vector<Eigen::Vector3d> current(source.positions.size());
    for (std::size_t i = 0; i < current.size(); ++i)
        current[i] = result.transform.apply(source.positions[i]);

    std::vector<Eigen::Vector3d> matched, candidate(current.size());
    double residual = rms_to(tree, current, &matched);
    result.residuals.push_back(residual);

    for (int it = 0; it < options.max_iterations && residual > 0.0; ++it)
    {
        const RigidTransform step = fit_rigid(current, matched);
        for (std::size_t i = 0; i < current.size(); ++i)
            candidate[i] = step.apply(current[i]);
        std::vector<Eigen::Vector3d> next_matched;
        const double next = rms_to(tree, candidate, &next_matched);
        if (next > residual)
        {
            result.converged = true;
            break;
        }
        current.swap(candidate);
        matched.swap(next_matched);
        result.transform = step * result.transform;
        result.residuals.push_back(next);
        const double gain = residual - next;
        residual = next;
        if (gain < options.tolerance)
        {
            result.converged = true;
            break;
        }
    }
    if (residual == 0.0)
        result.converged = true;

    result.aligned = source;
    result.aligned.positions = current;
    return result;
}

Mesh crop_radius(const Mesh& mesh, std::uint32_t center, double radius, bool require_triangles)
{
    if (center >= mesh.positions.size())
        throw std::out_of_range("crop_radius: centre vertex " + std::to_string(center) + " out of range (mesh has " +
                                std::to_string(mesh.positions.size()) + " vertices)");
    if (!(radius > 0.0))
        throw std::invalid_argument("crop_radius: radius must be positive");

    const Eigen::Vector3d c = mesh.positions[center];
    constexpr auto dropped = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> remap(mesh.positions.size(), dropped);
    Mesh out;
    for (std::size_t i = 0; i < mesh.positions.size(); ++i)
    {
        if ((mesh.positions[i] - c).norm() > radius)
            continue;
        remap[i] = static_cast<std::uint32_t>(out.positions.size());
        out.positions.push_back(mesh.positions[i]);
        if (mesh.has_colors())
            out.colors.push_back(mesh.colors[i]);
    }
    for (const auto& tri : mesh.triangles)
    {
        if (remap[tri[0]] == dropped || remap[tri[1]] == dropped || remap[tri[2]] == dropped)
            continue;
        out.triangles.push_back({remap[tri[0]], remap[tri[1]], remap[tri[2]]});
    }
    if (require_triangles && out.triangles.empty())
        throw std::invalid_argument("crop_radius: no triangle lies within " + std::to_string(radius) + " mm of vertex " +
                                    std::to_string(center));
    return out;
}

bool DepthMap::valid(int row, int col) const
{
    return std::isfinite(at(row, col));
}

std::size_t DepthMap::valid_count() const
{
    return static_cast<std::size_t>(std::count_if(depth.begin(), depth.end(), [](double z) { return std::isfinite(z); }));
}

DepthMap render_depth(const Mesh& mesh, int width, int height, double pixel_scale, std::optional<Eigen::Vector2d> center)
{
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("render_depth: resolution must be positive");
    if (!(pixel_scale > 0.0) || !std::isfinite(pixel_scale))
        throw std::invalid_argument("render_depth: pixel scale must be positive");
    if (mesh.triangles.empty())
        throw std::invalid_argument("render_depth: mesh has no triangles");
    mesh.validate();

    DepthMap map;
    map.width = width;
    map.height = height;
    map.pixel_scale = pixel_scale;
    map.origin = center ? *center : Eigen::Vector2d(centroid(mesh).head<2>());
    map.depth.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                     std::numeric_limits<double>::quiet_NaN());

    // Pixel space: column c and row r have their centres at integer coordinates.
    const double u0 = 0.5 * width - 0.5;
    const double v0 = 0.5 * height - 0.5;
    std::vector<Eigen::Vector3d> uvz(mesh.positions.size());
    for (std::size_t i = 0; i < uvz.size(); ++i)
    {
        const auto& p = mesh.positions[i];
        uvz[i] = {(p.x() - map.origin.x()) / pixel_scale + u0, (map.origin.y() - p.y()) / pixel_scale + v0, p.z()};
    }

    bool any = false;
    for (const auto& tri : mesh.triangles)
    {
        const Eigen::Vector3d& a = uvz[tri[0]];
        const Eigen::Vector3d& b = uvz[tri[1]];
        const Eigen::Vector3d& c = uvz[tri[2]];
        if (!a.allFinite() || !b.allFinite() || !c.allFinite())
            continue;
        const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (area == 0.0)
            continue;

        const int cmin = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
        const int cmax = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
        const int rmin = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
        const int rmax = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
        for (int r = rmin; r <= rmax; ++r)
        {
            for (int col = cmin; col <= cmax; ++col)
            {
                const double px = col, py = r;
                const double w1 = ((px - a.x()) * (c.y() - a.y()) - (py - a.y()) * (c.x() - a.x())) / area;
                const double w2 = ((b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x())) / area;
                const double w0 = 1.0 - w1 - w2;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0)
                    continue;
                // Anchored at a so that a plane of constant z reproduces z exactly.
                const double z = a.z() + w1 * (b.z() - a.z()) + w2 * (c.z() - a.z());
                double& slot = map.depth[static_cast<std::size_t>(r) * width + col];
                if (std::isnan(slot) || z > slot)
                    slot = z;
                any = true;
            }
        }
    }
    if (!any)
        throw std::runtime_error("render_depth: no triangle covers any pixel");
    return map;
}

std::vector<Eigen::Vector3d> resample_nearest(const Mesh& estimate, const Mesh& ground_truth)
{
    if (estimate.positions.empty())
        throw std::invalid_argument("resample_nearest: empty estimate");
    const KdTree tree(ground_truth.positions);
    std::vector<Eigen::Vector3d> out(estimate.positions.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = tree.points()[tree.nearest(estimate.positions[i]).index];
    return out;
}

void write_depth_pgm(const DepthMap& map, const std::filesystem::path& path)
{
    if (map.width <= 0 || map.height <= 0 ||
        map.depth.size() != static_cast<std::size_t>(map.width) * static_cast<std::size_t>(map.height))
        throw std::invalid_argument("write_depth_pgm: inconsistent depth map");

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double z : map.depth)
        if (std::isfinite(z))
        {
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
    if (!std::isfinite(lo))
        throw std::invalid_argument("write_depth_pgm: depth map has no valid pixel");
    const double quantum = hi > lo ? (hi - lo) / 65534.0 : 1.0;

    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "P2\n" << map.width << ' ' << map.height << "\n65535\n";
    for (int r = 0; r < map.height; ++r)
    {
        for (int c = 0; c < map.width; ++c)
        {
            const double z = map.at(r, c);
            const long grey = std::isfinite(z) ? std::lround((z - lo) / quantum) + 1 : 0;
            out << (c ? " " : "") << grey;
        }
        out << '\n';
    }
    if (!out)
        throw std::runtime_error("error writing '" + path.string() + "'");

    const nlohmann::ordered_json sidecar = {{"width", map.width},
                                            {"height", map.height},
                                            {"pixel_scale", map.pixel_scale},
                                            {"origin", {map.origin.x(), map.origin.y()}},
                                            {"z_offset", lo},
                                            {"quantum", quantum},
                                            {"invalid", 0}};
    std::ofstream js(path.string() + ".json");
    if (!js)
        throw std::runtime_error("cannot open '" + path.string() + ".json' for writing");
    js << sidecar.dump(2) << '\n';
}

DepthMap read_depth_pgm(const std::filesystem::path& path)
{
    std::ifstream js(path.string() + ".json");
    if (!js)
        throw std::runtime_error("cannot open sidecar '" + path.string() + ".json'");
    nlohmann::json meta;
    try
    {
        js >> meta;
    } catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error("'" + path.string() + ".json': " + e.what());
    }

    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    // Strip PGM comments before tokenising.
    std::stringstream body;
    std::string line;
    while (std::getline(in, line))
        body << line.substr(0, line.find('#')) << '\n';
    std::string magic;
    int w = 0, h = 0;
    long maxval = 0;
    body >> magic >> w >> h >> maxval;
    if (magic != "P2" || w <= 0 || h <= 0 || maxval <= 0)
        throw std::runtime_error("'" + path.string() + "': not an ASCII PGM");

    DepthMap map;
    try
    {
        map.width = meta.at("width").get<int>();
        map.height = meta.at("height").get<int>();
        map.pixel_scale = meta.at("pixel_scale").get<double>();
        map.origin = {meta.at("origin").at(0).get<double>(), meta.at("origin").at(1).get<double>()};
        const double lo = meta.at("z_offset").get<double>();
        const double quantum = meta.at("quantum").get<double>();
        if (map.width != w || map.height != h)
            throw std::runtime_error("'" + path.string() + "': sidecar size disagrees with the image");
        map.depth.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
        for (auto& z : map.depth)
        {
            long grey = -1;
            if (!(body >> grey) || grey < 0 || grey > maxval)
                throw std::runtime_error("'" + path.string() + "': truncated or invalid pixel data");
            z = grey == 0 ? std::numeric_limits<double>::quiet_NaN() : lo + static_cast<double>(grey - 1) * quantum;
        }
    } catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error("'" + path.string() + ".json': " + e.what());
    }
    return map;
}

} // namespace cnn3dmm::metrics
