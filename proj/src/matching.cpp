/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/matching.cpp
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
#include "cnn3dmm/matching.hpp"
#include "cnn3dmm/csv.hpp"

#include "Eigen/Eigenvalues"

#include <cmath>
#include <stdexcept>

namespace cnn3dmm::matching {

PcaTransform fit_pca(std::span<const Eigen::VectorXd> training, std::optional<Eigen::Index> dims)
{
    if (training.empty())
        throw std::invalid_argument("fit_pca: no training vectors");
    const Eigen::Index d = training.front().size();
    const auto n = static_cast<Eigen::Index>(training.size());
    if (dims && (*dims < 1 || *dims > d))
        throw std::invalid_argument("fit_pca: requested " + std::to_string(*dims) + " components for dimension " +
                                    std::to_string(d));
    if (n < 2 || (dims && n <= *dims))
        throw std::invalid_argument("fit_pca: " + std::to_string(n) + " training vectors are too few for " +
                                    std::to_string(dims.value_or(1)) + " components");

    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        const auto& v = training[static_cast<std::size_t>(i)];
        if (v.size() != d)
            throw std::invalid_argument("fit_pca: vector " + std::to_string(i) + " has size " +
                                        std::to_string(v.size()) + ", expected " + std::to_string(d));
        if (!v.allFinite())
            throw std::invalid_argument("fit_pca: vector " + std::to_string(i) + " is not finite");
        x.row(i) = v.transpose();
    }
    PcaTransform pca;
    pca.mean = x.colwise().mean().transpose();
    x.rowwise() -= pca.mean.transpose();
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("fit_pca: eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();

    Eigen::Index m = 0;
    if (dims)
    {
        m = *dims;
    } else
    {
        const double cutoff = 1e-12 * std::max(values(0), 0.0);
        while (m < std::min(d, n - 1) && values(m) > cutoff)
            ++m;
        if (m == 0)
            throw std::invalid_argument("fit_pca: training vectors have zero variance");
    }

    pca.components = vectors.leftCols(m);
    pca.variances = values.head(m).cwiseMax(0.0);
    for (Eigen::Index c = 0; c < m; ++c)
    {
        Eigen::Index arg = 0;
        pca.components.col(c).cwiseAbs().maxCoeff(&arg);
        if (pca.components(arg, c) < 0.0)
            pca.components.col(c) *= -1.0;
    }
    return pca;
}

PcaTransform fit_pca(std::span<const ParamVector> training, std::optional<Eigen::Index> dims)
{
    std::vector<Eigen::VectorXd> flat;
    flat.reserve(training.size());
    for (const auto& p : training)
        flat.push_back(p.concatenated());
    return fit_pca(std::span<const Eigen::VectorXd>(flat), dims);
}

Descriptor embed(const Eigen::Ref<const Eigen::VectorXd>& gamma, const PcaTransform& pca)
{
    if (gamma.size() != pca.mean.size())
        throw std::invalid_argument("embed: parameter vector has " + std::to_string(gamma.size()) +
                                    " entries, PCA expects " + std::to_string(pca.mean.size()));
    const Eigen::VectorXd p = pca.components.transpose() * (gamma - pca.mean);
    Descriptor d;
    d.values = p.unaryExpr([](double v) { return std::copysign(std::sqrt(std::abs(v)), v); });
    return d;
}

Descriptor embed(const ParamVector& gamma, const PcaTransform& pca)
{
    return embed(gamma.concatenated(), pca);
}

double similarity(const Descriptor& a, const Descriptor& b)
{
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("similarity: descriptor sizes differ (" + std::to_string(a.values.size()) + " vs " +
                                    std::to_string(b.values.size()) + ")");
    const double aa = a.values.dot(a.values);
    const double bb = b.values.dot(b.values);
    if (aa == 0.0 || bb == 0.0)
        throw std::invalid_argument("similarity: zero-norm descriptor");
    // sqrt(aa * aa) == aa exactly, so a descriptor scores exactly 1 against itself.
    double denom = std::sqrt(aa * bb);
    if (!std::isfinite(denom) || denom == 0.0)
        denom = std::sqrt(aa) * std::sqrt(bb);
    return std::clamp(a.values.dot(b.values) / denom, -1.0, 1.0);
}

ScoreSet score_pairs(std::span<const Pair> protocol, const std::map<std::string, Descriptor>& descriptors)
{
    ScoreSet scores;
    scores.reserve(protocol.size());
    for (std::size_t i = 0; i < protocol.size(); ++i)
    {
        const auto& pair = protocol[i];
        const auto a = descriptors.find(pair.id_a);
        const auto b = descriptors.find(pair.id_b);
        if (a == descriptors.end() || b == descriptors.end())
            throw std::out_of_range("pair " + std::to_string(i) + ": unknown id '" +
                                    (a == descriptors.end() ? pair.id_a : pair.id_b) + "'");
        double score = 0.0;
        try
        {
            score = similarity(a->second, b->second);
        } catch (const std::invalid_argument& e)
        {
            throw std::invalid_argument("pair " + std::to_string(i) + ": " + e.what());
        }
        scores.push_back({pair.id_a, pair.id_b, pair.same, score});
    }
    return scores;
}

std::map<std::string, Descriptor> template_descriptors(
    const std::map<std::string, std::vector<pooling::TemplateItem>>& templates, const PcaTransform& pca)
{
    std::map<std::string, Descriptor> out;
    for (const auto& [id, items] : templates)
        out.emplace(id, embed(pooling::pool_template(items), pca));
    return out;
}

namespace {

bool parse_label(const std::string& s, const std::string& where)
{
    if (s == "same" || s == "1")
        return true;
    if (s == "diff" || s == "0")
        return false;
    throw std::runtime_error(where + ": label must be 'same' or 'diff', got '" + s + "'");
}

} // namespace

std::vector<Pair> read_pairs(const std::filesystem::path& path)
{
    const io::CsvTable t = io::read_csv(path);
    if (t.header.size() != 3)
        throw std::runtime_error("'" + path.string() + "': expected columns id_a,id_b,label");
    std::vector<Pair> pairs;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        pairs.push_back({t.rows[r][0], t.rows[r][1],
                         parse_label(t.rows[r][2], path.filename().string() + " row " + std::to_string(r + 1))});
    return pairs;
}

void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs)
{
    io::CsvTable t;
    t.header = {"id_a", "id_b", "label"};
    for (const auto& p : pairs)
        t.rows.push_back({p.id_a, p.id_b, p.same ? "same" : "diff"});
    io::write_csv(path, t);
}

void write_scores(const std::filesystem::path& path, const ScoreSet& scores)
{
    io::CsvTable t;
    t.header = {"id_a", "id_b", "label", "score"};
    for (const auto& s : scores)
        t.rows.push_back({s.id_a, s.id_b, s.same ? "same" : "diff", io::format_double(s.score)});
    io::write_csv(path, t);
}

ScoreSet read_scores(const std::filesystem::path& path)
{
    const io::CsvTable t = io::read_csv(path);
    if (t.header.size() != 4)
        throw std::runtime_error("'" + path.string() + "': expected columns id_a,id_b,label,score");
    ScoreSet scores;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
    {
        const std::string where = path.filename().string() + " row " + std::to_string(r + 1);
        scores.push_back({t.rows[r][0], t.rows[r][1], parse_label(t.rows[r][2], where),
                          io::parse_double(t.rows[r][3], where)});
    }
    return scores;
}

std::map<std::string, std::vector<pooling::TemplateItem>> read_templates(
    const std::filesystem::path& path, const std::map<std::string, std::vector<ParamVector>>& item_estimates)
{
    const io::CsvTable t = io::read_csv(path);
    if (t.header.size() != 3)
        throw std::runtime_error("'" + path.string() + "': expected columns template_id,item_id,kind");
    std::map<std::string, std::vector<pooling::TemplateItem>> templates;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
    {
        const auto& row = t.rows[r];
        const auto it = item_estimates.find(row[1]);
        if (it == item_estimates.end() || it->second.empty())
            throw std::runtime_error("'" + path.string() + "' row " + std::to_string(r + 1) + ": no estimate for item '" +
                                     row[1] + "'");
        pooling::TemplateItem item;
        item.kind = pooling::parse_item_kind(row[2]);
        if (item.kind == pooling::ItemKind::still_image && it->second.size() != 1)
            throw std::runtime_error("'" + path.string() + "' row " + std::to_string(r + 1) + ": still item '" + row[1] +
                                     "' has " + std::to_string(it->second.size()) + " estimates");
        for (const auto& g : it->second)
            item.estimates.push_back({g, 1.0});
        templates[row[0]].push_back(std::move(item));
    }
    return templates;
}

void write_descriptors(const std::filesystem::path& path, const std::map<std::string, Descriptor>& descriptors)
{
    io::CsvTable t;
    t.header = {"id"};
    const Eigen::Index m = descriptors.empty() ? 0 : descriptors.begin()->second.values.size();
    for (Eigen::Index k = 0; k < m; ++k)
        t.header.push_back("d" + std::to_string(k));
    for (const auto& [id, d] : descriptors)
    {
        std::vector<std::string> row{id};
        for (Eigen::Index k = 0; k < d.values.size(); ++k)
            row.push_back(io::format_double(d.values(k)));
        t.rows.push_back(std::move(row));
    }
    io::write_csv(path, t);
}

std::map<std::string, Descriptor> read_descriptors(const std::filesystem::path& path)
{
    const io::CsvTable t = io::read_csv(path);
    if (t.header.size() < 2)
        throw std::runtime_error("'" + path.string() + "': expected id followed by descriptor columns");
    std::map<std::string, Descriptor> out;
    const auto m = static_cast<Eigen::Index>(t.header.size() - 1);
    for (std::size_t r = 0; r < t.rows.size(); ++r)
    {
        Descriptor d;
        d.values.resize(m);
        const std::string where = path.filename().string() + " row " + std::to_string(r + 1);
        for (Eigen::Index k = 0; k < m; ++k)
            d.values(k) = io::parse_double(t.rows[r][static_cast<std::size_t>(k + 1)], where);
        if (!out.emplace(t.rows[r][0], std::move(d)).second)
            throw std::runtime_error("'" + path.string() + "': duplicate id '" + t.rows[r][0] + "'");
    }
    return out;
}

} // namespace cnn3dmm::matching
