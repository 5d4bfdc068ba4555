/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/mesh_io.cpp
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
#include "cnn3dmm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cnn3dmm {

void Mesh::validate() const
{
    if (has_colors() && colors.size() != positions.size())
        throw std::invalid_argument("mesh has " + std::to_string(colors.size()) + " colours for " +
                                    std::to_string(positions.size()) + " vertices");
    for (const auto& t : triangles)
        for (auto idx : t)
            if (idx >= positions.size())
                throw std::invalid_argument("triangle index " + std::to_string(idx) + " out of range");
}

Eigen::Vector3d centroid(const Mesh& mesh)
{
    if (mesh.positions.empty())
        throw std::invalid_argument("centroid of an empty mesh");
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto& p : mesh.positions)
        sum += p;
    return sum / static_cast<double>(mesh.positions.size());
}

std::uint32_t max_z_vertex(const Mesh& mesh)
{
    if (mesh.positions.empty())
        throw std::invalid_argument("max_z_vertex of an empty mesh");
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < mesh.positions.size(); ++i)
        if (mesh.positions[i].z() > mesh.positions[best].z())
            best = i;
    return best;
}

void write_ply(const Mesh& mesh, const std::filesystem::path& path)
{
    mesh.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");

    out << "ply\nformat ascii 1.0\ncomment cnn3dmm\n";
    out << "element vertex " << mesh.positions.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (mesh.has_colors())
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.triangles.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";

    char buf[128];
    for (std::size_t i = 0; i < mesh.positions.size(); ++i)
    {
        const auto& p = mesh.positions[i];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
        out << buf;
        if (mesh.has_colors())
        {
            const auto& c = mesh.colors[i];
            for (int k = 0; k < 3; ++k)
                out << ' ' << static_cast<int>(std::lround(std::clamp(c[k], 0.0, 255.0)));
        }
        out << '\n';
    }
    for (const auto& t : mesh.triangles)
        out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (!out)
        throw std::runtime_error("failed writing '" + path.string() + "'");
}

Mesh read_ply(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    auto fail = [&](const std::string& why) {
        return std::runtime_error("'" + path.string() + "': " + why);
    };

    std::string line;
    if (!std::getline(in, line) || line != "ply")
        throw fail("missing 'ply' magic");

    struct Element
    {
        std::string name;
        std::size_t count = 0;
        std::vector<std::string> properties;
        bool has_list = false;
    };
    std::vector<Element> elements;
    bool ascii = false;
    while (std::getline(in, line))
    {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format")
        {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (word == "element")
        {
            Element e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (word == "property")
        {
            if (elements.empty())
                throw fail("property before element");
            std::string type, name;
            ls >> type;
            if (type == "list")
            {
                std::string count_type, item_type;
                ls >> count_type >> item_type >> name;
                elements.back().has_list = true;
            } else
            {
                ls >> name;
            }
            elements.back().properties.push_back(name);
        } else if (word == "end_header")
        {
            break;
        }
    }
    if (!ascii)
        throw fail("only ASCII PLY is supported");

    Mesh mesh;
    bool at_line_start = true;
    for (const auto& e : elements)
    {
        if (e.name == "vertex")
        {
            int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
            for (int i = 0; i < static_cast<int>(e.properties.size()); ++i)
            {
                const auto& p = e.properties[static_cast<std::size_t>(i)];
                if (p == "x") ix = i;
                else if (p == "y") iy = i;
                else if (p == "z") iz = i;
                else if (p == "red") ir = i;
                else if (p == "green") ig = i;
                else if (p == "blue") ib = i;
            }
            if (ix < 0 || iy < 0 || iz < 0)
                throw fail("vertex element lacks x/y/z");
            const bool colored = ir >= 0 && ig >= 0 && ib >= 0;
            std::vector<double> values(e.properties.size());
            for (std::size_t v = 0; v < e.count; ++v)
            {
                for (auto& x : values)
                    if (!(in >> x))
                        throw fail("truncated vertex data");
                mesh.positions.emplace_back(values[static_cast<std::size_t>(ix)], values[static_cast<std::size_t>(iy)],
                                            values[static_cast<std::size_t>(iz)]);
                if (colored)
                    mesh.colors.emplace_back(values[static_cast<std::size_t>(ir)], values[static_cast<std::size_t>(ig)],
                                             values[static_cast<std::size_t>(ib)]);
            }
            at_line_start = e.count == 0 && at_line_start;
        } else if (e.name == "face")
        {
            if (!e.has_list || e.properties.size() != 1)
                throw fail("face element must hold exactly one index list");
            for (std::size_t f = 0; f < e.count; ++f)
            {
                std::size_t n = 0;
                if (!(in >> n))
                    throw fail("truncated face data");
                std::vector<std::uint32_t> idx(n);
                for (auto& i : idx)
                    if (!(in >> i))
                        throw fail("truncated face data");
                // Fan-triangulate polygons.
                for (std::size_t k = 1; k + 1 < n; ++k)
                    mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
            }
            at_line_start = e.count == 0 && at_line_start;
        } else
        {
            // Skip unknown elements line by line.
            if (!at_line_start)
                std::getline(in, line);
            at_line_start = true;
            for (std::size_t i = 0; i < e.count; ++i)
                std::getline(in, line);
        }
    }
    mesh.validate();
    return mesh;
}

} // namespace cnn3dmm
