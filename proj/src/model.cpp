/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/model.cpp
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
#include "cnn3dmm/model.hpp"
#include "cnn3dmm/container.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cnn3dmm {

namespace {

std::string dims_message(const char* what, Eigen::Index expected, Eigen::Index actual)
{
    return std::string(what) + ": expected " + std::to_string(expected) + ", got " + std::to_string(actual);
}

std::vector<float> to_floats(const Eigen::Ref<const Eigen::MatrixXd>& m)
{
    // Column-major, matching Eigen's default storage.
    std::vector<float> out(static_cast<std::size_t>(m.size()));
    std::size_t i = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            out[i++] = static_cast<float>(m(r, c));
    return out;
}

Eigen::MatrixXd from_floats(const std::vector<float>& v, Eigen::Index rows, Eigen::Index cols)
{
    if (static_cast<Eigen::Index>(v.size()) != rows * cols)
        throw std::runtime_error(dims_message("model array size", rows * cols, static_cast<Eigen::Index>(v.size())));
    return Eigen::Map<const Eigen::MatrixXf>(v.data(), rows, cols).cast<double>();
}

} // namespace

ParamVector::ParamVector(Eigen::VectorXd alpha, Eigen::VectorXd beta) : alpha(std::move(alpha)), beta(std::move(beta))
{
}

ParamVector ParamVector::zeros(Eigen::Index shape_dims, Eigen::Index texture_dims)
{
    return {Eigen::VectorXd::Zero(shape_dims), Eigen::VectorXd::Zero(texture_dims)};
}

ParamVector ParamVector::from_concatenated(const Eigen::Ref<const Eigen::VectorXd>& gamma, Eigen::Index shape_dims)
{
    if (shape_dims < 0 || shape_dims > gamma.size())
        throw std::invalid_argument(dims_message("shape dims within parameter vector", gamma.size(), shape_dims));
    return {gamma.head(shape_dims), gamma.tail(gamma.size() - shape_dims)};
}

Eigen::VectorXd ParamVector::concatenated() const
{
    Eigen::VectorXd gamma(size());
    gamma << alpha, beta;
    return gamma;
}

bool ParamVector::all_finite() const
{
    return alpha.allFinite() && beta.allFinite();
}

MorphableModel::MorphableModel(Eigen::VectorXd mean_shape, Eigen::VectorXd mean_texture, Eigen::MatrixXd shape_basis,
                               Eigen::MatrixXd texture_basis, Eigen::VectorXd shape_sigmas,
                               Eigen::VectorXd texture_sigmas, std::vector<Triangle> triangles,
                               std::map<std::string, std::uint32_t> landmarks)
    : mean_shape_(std::move(mean_shape)), mean_texture_(std::move(mean_texture)),
      shape_basis_(std::move(shape_basis)), texture_basis_(std::move(texture_basis)),
      shape_sigmas_(std::move(shape_sigmas)), texture_sigmas_(std::move(texture_sigmas)),
      triangles_(std::move(triangles)), landmarks_(std::move(landmarks))
{
    const Eigen::Index rows = mean_shape_.size();
    if (rows == 0 || rows % 3 != 0)
        throw std::invalid_argument("mean shape length must be a positive multiple of 3, got " + std::to_string(rows));
    if (mean_texture_.size() != rows)
        throw std::invalid_argument(dims_message("mean texture length", rows, mean_texture_.size()));
    if (shape_basis_.rows() != rows)
        throw std::invalid_argument(dims_message("shape basis rows", rows, shape_basis_.rows()));
    if (texture_basis_.rows() != rows)
        throw std::invalid_argument(dims_message("texture basis rows", rows, texture_basis_.rows()));
    if (shape_basis_.cols() < 1 || texture_basis_.cols() < 1)
        throw std::invalid_argument("bases need at least one component");
    if (shape_sigmas_.size() != shape_basis_.cols())
        throw std::invalid_argument(dims_message("shape sigma count", shape_basis_.cols(), shape_sigmas_.size()));
    if (texture_sigmas_.size() != texture_basis_.cols())
        throw std::invalid_argument(dims_message("texture sigma count", texture_basis_.cols(), texture_sigmas_.size()));
    if (!(shape_sigmas_.array() > 0.0).all() || !(texture_sigmas_.array() > 0.0).all() ||
        !shape_sigmas_.allFinite() || !texture_sigmas_.allFinite())
        throw std::invalid_argument("component sigmas must be finite and strictly positive");
    if (!mean_shape_.allFinite() || !mean_texture_.allFinite() || !shape_basis_.allFinite() ||
        !texture_basis_.allFinite())
        throw std::invalid_argument("model contains non-finite values");

    const auto num_vertices = static_cast<std::uint64_t>(rows / 3);
    for (const auto& t : triangles_)
        for (auto idx : t)
            if (idx >= num_vertices)
                throw std::invalid_argument("triangle index " + std::to_string(idx) + " out of range for " +
                                            std::to_string(num_vertices) + " vertices");
    if (!landmarks_.contains("nose_tip"))
        throw std::invalid_argument("landmark map must contain 'nose_tip'");
    for (const auto& [name, idx] : landmarks_)
        if (idx >= num_vertices)
            throw std::invalid_argument("landmark '" + name + "' index out of range");

    shape_qr_ = std::make_shared<const Eigen::HouseholderQR<Eigen::MatrixXd>>(shape_basis_);
    texture_qr_ = std::make_shared<const Eigen::HouseholderQR<Eigen::MatrixXd>>(texture_basis_);
}

std::uint32_t MorphableModel::landmark(std::string_view name) const
{
    const auto it = landmarks_.find(std::string(name));
    if (it == landmarks_.end())
        throw std::out_of_range("unknown landmark '" + std::string(name) + "'");
    return it->second;
}

Mesh synthesize(const MorphableModel& model, const ParamVector& params)
{
    if (params.alpha.size() != model.shape_dims())
        throw std::invalid_argument(dims_message("shape coefficient count (K_s)", model.shape_dims(), params.alpha.size()));
    if (params.beta.size() != model.texture_dims())
        throw std::invalid_argument(dims_message("texture coefficient count (K_t)", model.texture_dims(), params.beta.size()));

    const Eigen::VectorXd shape = model.mean_shape() + model.shape_basis() * params.alpha;
    const Eigen::VectorXd texture = model.mean_texture() + model.texture_basis() * params.beta;

    Mesh mesh;
    const auto n = static_cast<std::size_t>(model.num_vertices());
    mesh.positions.resize(n);
    mesh.colors.resize(n);
    for (std::size_t v = 0; v < n; ++v)
    {
        const auto i = static_cast<Eigen::Index>(3 * v);
        mesh.positions[v] = shape.segment<3>(i);
        mesh.colors[v] = texture.segment<3>(i).cwiseMax(0.0).cwiseMin(255.0);
    }
    mesh.triangles = model.triangles();
    return mesh;
}

Mesh mean_mesh(const MorphableModel& model)
{
    return synthesize(model, ParamVector::zeros(model.shape_dims(), model.texture_dims()));
}

ParamVector project(const MorphableModel& model, const Mesh& mesh)
{
    if (static_cast<Eigen::Index>(mesh.num_vertices()) != model.num_vertices())
        throw std::invalid_argument(
            dims_message("mesh vertex count", model.num_vertices(), static_cast<Eigen::Index>(mesh.num_vertices())));
    if (mesh.has_colors() && mesh.colors.size() != mesh.positions.size())
        throw std::invalid_argument("mesh colour count does not match its vertex count");

    const Eigen::Index rows = 3 * model.num_vertices();
    Eigen::VectorXd residual(rows);
    for (Eigen::Index v = 0; v < model.num_vertices(); ++v)
        residual.segment<3>(3 * v) = mesh.positions[static_cast<std::size_t>(v)];
    residual -= model.mean_shape();

    ParamVector params;
    params.alpha = model.shape_solver().solve(residual);
    if (mesh.has_colors())
    {
        for (Eigen::Index v = 0; v < model.num_vertices(); ++v)
            residual.segment<3>(3 * v) = mesh.colors[static_cast<std::size_t>(v)];
        residual -= model.mean_texture();
        params.beta = model.texture_solver().solve(residual);
    } else
    {
        params.beta = Eigen::VectorXd::Zero(model.texture_dims());
    }
    return params;
}

ParamVector whiten(const MorphableModel& model, const ParamVector& raw)
{
    if (raw.alpha.size() != model.shape_dims() || raw.beta.size() != model.texture_dims())
        throw std::invalid_argument(dims_message("parameter count", model.shape_dims() + model.texture_dims(), raw.size()));
    return {raw.alpha.cwiseQuotient(model.shape_sigmas()), raw.beta.cwiseQuotient(model.texture_sigmas())};
}

ParamVector unwhiten(const MorphableModel& model, const ParamVector& whitened)
{
    if (whitened.alpha.size() != model.shape_dims() || whitened.beta.size() != model.texture_dims())
        throw std::invalid_argument(
            dims_message("parameter count", model.shape_dims() + model.texture_dims(), whitened.size()));
    return {whitened.alpha.cwiseProduct(model.shape_sigmas()), whitened.beta.cwiseProduct(model.texture_sigmas())};
}

ParamVector sample_prior(const MorphableModel& model, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    ParamVector p = ParamVector::zeros(model.shape_dims(), model.texture_dims());
    for (Eigen::Index k = 0; k < p.alpha.size(); ++k)
        p.alpha(k) = model.shape_sigmas()(k) * normal(rng);
    for (Eigen::Index k = 0; k < p.beta.size(); ++k)
        p.beta(k) = model.texture_sigmas()(k) * normal(rng);
    return p;
}

MorphableModel generate_synthetic_model(std::uint64_t seed, Eigen::Index num_vertices, Eigen::Index shape_dims,
                                        Eigen::Index texture_dims)
{
    if (num_vertices < 16)
        throw std::invalid_argument("synthetic model needs at least 16 vertices, got " + std::to_string(num_vertices));
    const Eigen::Index rows = 3 * num_vertices;
    if (shape_dims < 1 || shape_dims > rows)
        throw std::invalid_argument("shape dims must lie in [1, 3*V], got " + std::to_string(shape_dims));
    if (texture_dims < 1 || texture_dims > rows)
        throw std::invalid_argument("texture dims must lie in [1, 3*V], got " + std::to_string(texture_dims));

    // Grid over a 150 x 190 mm face patch, filled row by row; the last row may be partial.
    const auto cols = static_cast<Eigen::Index>(std::ceil(std::sqrt(static_cast<double>(num_vertices))));
    const Eigen::Index grid_rows = (num_vertices + cols - 1) / cols;
    constexpr double width = 150.0, height = 190.0;
    constexpr double rim_z = 50.0, dome_height = 45.0, nose_height = 12.0, nose_radius = 12.0;

    Eigen::VectorXd mean_shape(rows);
    Eigen::VectorXd mean_texture(rows);
    for (Eigen::Index v = 0; v < num_vertices; ++v)
    {
        const double x = (static_cast<double>(v % cols) / static_cast<double>(cols - 1) - 0.5) * width;
        const double y = (0.5 - static_cast<double>(v / cols) / static_cast<double>(grid_rows - 1)) * height;
        const double u = x / (0.6 * width), w = y / (0.6 * height);
        const double dome = std::sqrt(std::max(0.0, 1.0 - u * u - w * w));
        const double nose = std::exp(-(x * x + (y + 5.0) * (y + 5.0)) / (2.0 * nose_radius * nose_radius));
        const double z = rim_z + dome_height * dome + nose_height * nose;
        mean_shape.segment<3>(3 * v) << x, y, z;
        const double shade = 0.4 * (z - rim_z);
        mean_texture.segment<3>(3 * v) << std::min(255.0, 160.0 + shade), std::min(255.0, 120.0 + shade),
            std::min(255.0, 95.0 + shade);
    }

    std::vector<Triangle> triangles;
    for (Eigen::Index r = 0; r + 1 < grid_rows; ++r)
    {
        for (Eigen::Index c = 0; c + 1 < cols; ++c)
        {
            const auto a = static_cast<std::uint32_t>(r * cols + c);
            const auto b = a + 1;
            const auto d = static_cast<std::uint32_t>(a + cols);
            const auto e = d + 1;
            if (e >= static_cast<std::uint32_t>(num_vertices))
                continue;
            triangles.push_back({a, d, b});
            triangles.push_back({b, d, e});
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto orthonormal_basis = [&](Eigen::Index k) {
        Eigen::MatrixXd g(rows, k);
        for (Eigen::Index c = 0; c < k; ++c)
            for (Eigen::Index r = 0; r < rows; ++r)
                g(r, c) = normal(rng);
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(rows, k));
    };
    Eigen::MatrixXd shape_basis = orthonormal_basis(shape_dims);
    Eigen::MatrixXd texture_basis = orthonormal_basis(texture_dims);

    // Unit-norm columns spread over 3V entries; scaling by sqrt(3V) keeps per-vertex
    // variation independent of the resolution: a few mm of shape and about 10 grey
    // levels of colour, so prior samples stay well clear of the [0, 255] clamp.
    const double spread = std::sqrt(static_cast<double>(rows));
    Eigen::VectorXd shape_sigmas(shape_dims), texture_sigmas(texture_dims);
    for (Eigen::Index k = 0; k < shape_dims; ++k)
        shape_sigmas(k) = 2.0 * spread / std::sqrt(static_cast<double>(k + 1));
    for (Eigen::Index k = 0; k < texture_dims; ++k)
        texture_sigmas(k) = 4.0 * spread / std::sqrt(static_cast<double>(k + 1));

    std::uint32_t nose_tip = 0;
    for (Eigen::Index v = 1; v < num_vertices; ++v)
        if (mean_shape(3 * v + 2) > mean_shape(3 * nose_tip + 2))
            nose_tip = static_cast<std::uint32_t>(v);

    return MorphableModel(std::move(mean_shape), std::move(mean_texture), std::move(shape_basis),
                          std::move(texture_basis), std::move(shape_sigmas), std::move(texture_sigmas),
                          std::move(triangles), {{"nose_tip", nose_tip}});
}

void save_model(const MorphableModel& model, const std::filesystem::path& path)
{
    io::Container c;
    c.header["format"] = "cnn3dmm-model";
    c.header["version"] = 1;
    c.header["V"] = model.num_vertices();
    c.header["K_s"] = model.shape_dims();
    c.header["K_t"] = model.texture_dims();
    c.header["landmarks"] = model.landmarks();
    c.header["triangle_count"] = model.triangles().size();

    c.add("mean_shape", to_floats(model.mean_shape()));
    c.add("mean_texture", to_floats(model.mean_texture()));
    c.add("shape_basis", to_floats(model.shape_basis()));
    c.add("texture_basis", to_floats(model.texture_basis()));
    c.add("shape_sigmas", to_floats(model.shape_sigmas()));
    c.add("texture_sigmas", to_floats(model.texture_sigmas()));
    std::vector<std::uint32_t> tri;
    tri.reserve(3 * model.triangles().size());
    for (const auto& t : model.triangles())
        tri.insert(tri.end(), t.begin(), t.end());
    c.add("triangles", std::move(tri));
    io::write_container(path, "C3DM", c);
}

MorphableModel load_model(const std::filesystem::path& path)
{
    const io::Container c = io::read_container(path, "C3DM");
    const auto& h = c.header;
    if (h.value("format", "") != "cnn3dmm-model" || h.value("version", 0) != 1)
        throw std::runtime_error("'" + path.string() + "': unsupported model format/version");
    const auto V = h.at("V").get<Eigen::Index>();
    const auto ks = h.at("K_s").get<Eigen::Index>();
    const auto kt = h.at("K_t").get<Eigen::Index>();
    const auto triangle_count = h.at("triangle_count").get<std::size_t>();

    const auto& tri = c.u32("triangles");
    if (tri.size() != 3 * triangle_count)
        throw std::runtime_error("'" + path.string() + "': triangle array does not match triangle_count");
    std::vector<Triangle> triangles(triangle_count);
    for (std::size_t i = 0; i < triangle_count; ++i)
        triangles[i] = {tri[3 * i], tri[3 * i + 1], tri[3 * i + 2]};

    return MorphableModel(from_floats(c.f32("mean_shape"), 3 * V, 1), from_floats(c.f32("mean_texture"), 3 * V, 1),
                          from_floats(c.f32("shape_basis"), 3 * V, ks), from_floats(c.f32("texture_basis"), 3 * V, kt),
                          from_floats(c.f32("shape_sigmas"), ks, 1), from_floats(c.f32("texture_sigmas"), kt, 1),
                          std::move(triangles), h.at("landmarks").get<std::map<std::string, std::uint32_t>>());
}

} // namespace cnn3dmm
