/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/pooling.cpp
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
#include "cnn3dmm/pooling.hpp"
#include "cnn3dmm/csv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cnn3dmm::pooling {

std::string to_string(ItemKind kind)
{
    return kind == ItemKind::video ? "video" : "still";
}

ItemKind parse_item_kind(std::string_view text)
{
    if (text == "still" || text == "still_image" || text == "image")
        return ItemKind::still_image;
    if (text == "video")
        return ItemKind::video;
    throw std::invalid_argument("unknown item kind '" + std::string(text) + "'");
}

ParamVector pool(std::span<const WeightedEstimate> estimates)
{
    if (estimates.empty())
        throw std::invalid_argument("pool: empty estimate list");
    const Eigen::Index shape_dims = estimates.front().gamma.alpha.size();
    const Eigen::Index texture_dims = estimates.front().gamma.beta.size();

    std::vector<std::size_t> order;
    order.reserve(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i)
    {
        const auto& e = estimates[i];
        if (e.gamma.alpha.size() != shape_dims || e.gamma.beta.size() != texture_dims)
            throw std::invalid_argument("pool: estimate " + std::to_string(i) + " has dimensions (" +
                                        std::to_string(e.gamma.alpha.size()) + ", " +
                                        std::to_string(e.gamma.beta.size()) + "), expected (" +
                                        std::to_string(shape_dims) + ", " + std::to_string(texture_dims) + ")");
        if (!std::isfinite(e.weight) || e.weight < 0.0)
            throw std::invalid_argument("pool: estimate " + std::to_string(i) + " has invalid weight " +
                                        std::to_string(e.weight));
        if (!e.gamma.all_finite())
            throw std::invalid_argument("pool: estimate " + std::to_string(i) + " has non-finite parameters");
        if (e.weight > 0.0)
            order.push_back(i);
    }

    // Accumulate in a canonical order (weight, then coefficients) so the result does not
    // depend on how the caller listed the estimates, not even in the last bit.
    auto before = [&](std::size_t a, std::size_t b) {
        const auto& x = estimates[a];
        const auto& y = estimates[b];
        if (x.weight != y.weight)
            return x.weight < y.weight;
        for (Eigen::Index k = 0; k < shape_dims; ++k)
            if (x.gamma.alpha(k) != y.gamma.alpha(k))
                return x.gamma.alpha(k) < y.gamma.alpha(k);
        for (Eigen::Index k = 0; k < texture_dims; ++k)
            if (x.gamma.beta(k) != y.gamma.beta(k))
                return x.gamma.beta(k) < y.gamma.beta(k);
        return false;
    };
    std::sort(order.begin(), order.end(), before);

    Eigen::VectorXd mean_alpha = Eigen::VectorXd::Zero(shape_dims);
    Eigen::VectorXd mean_beta = Eigen::VectorXd::Zero(texture_dims);
    Eigen::VectorXd lo, hi;
    double total = 0.0;
    for (std::size_t i : order)
    {
        const auto& e = estimates[i];
        const Eigen::VectorXd g = e.gamma.concatenated();
        lo = lo.size() ? lo.cwiseMin(g).eval() : g;
        hi = hi.size() ? hi.cwiseMax(g).eval() : g;
        total += e.weight;
        const double step = e.weight / total;
        mean_alpha += step * (e.gamma.alpha - mean_alpha);
        mean_beta += step * (e.gamma.beta - mean_beta);
    }
    if (total == 0.0)
        throw std::invalid_argument("pool: all weights are zero");
    // Rounding in the update may leave the hull by an ulp; the exact mean cannot.
    mean_alpha = mean_alpha.cwiseMax(lo.head(shape_dims)).cwiseMin(hi.head(shape_dims));
    mean_beta = mean_beta.cwiseMax(lo.tail(texture_dims)).cwiseMin(hi.tail(texture_dims));
    return {std::move(mean_alpha), std::move(mean_beta)};
}

ParamVector pool_template(std::span<const TemplateItem> items)
{
    if (items.empty())
        throw std::invalid_argument("pool_template: empty template");
    std::vector<WeightedEstimate> reduced;
    reduced.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        const auto& item = items[i];
        if (item.estimates.empty())
            throw std::invalid_argument("pool_template: item " + std::to_string(i) + " has no estimates");
        if (item.kind == ItemKind::still_image && item.estimates.size() != 1)
            throw std::invalid_argument("pool_template: still item " + std::to_string(i) + " has " +
                                        std::to_string(item.estimates.size()) + " estimates");
        std::vector<WeightedEstimate> frames;
        frames.reserve(item.estimates.size());
        for (const auto& e : item.estimates)
            frames.push_back({e.gamma, 1.0});
        reduced.push_back({pool(frames), 1.0});
    }
    return pool(reduced);
}

std::vector<EstimateRow> read_estimates(const std::filesystem::path& path, Eigen::Index shape_dims)
{
    const io::CsvTable table = io::read_csv(path);
    if (table.header.size() < 5)
        throw std::runtime_error("'" + path.string() + "': expected subject_id,item_id,kind,weight,params...");
    const auto dims = static_cast<Eigen::Index>(table.header.size() - 4);
    if (shape_dims < 0 || shape_dims > dims)
        throw std::runtime_error("'" + path.string() + "': " + std::to_string(dims) +
                                 " parameter columns cannot hold " + std::to_string(shape_dims) + " shape dims");

    std::vector<EstimateRow> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r)
    {
        const auto& f = table.rows[r];
        const std::string where = path.filename().string() + " row " + std::to_string(r + 1);
        EstimateRow row;
        row.subject_id = f[0];
        row.item_id = f[1];
        row.kind = parse_item_kind(f[2]);
        row.weight = io::parse_double(f[3], where);
        Eigen::VectorXd gamma(dims);
        for (Eigen::Index k = 0; k < dims; ++k)
            gamma(k) = io::parse_double(f[static_cast<std::size_t>(4 + k)], where);
        row.gamma = ParamVector::from_concatenated(gamma, shape_dims);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_estimates(const std::filesystem::path& path, std::span<const EstimateRow> rows)
{
    io::CsvTable table;
    table.header = {"subject_id", "item_id", "kind", "weight"};
    const Eigen::Index dims = rows.empty() ? 0 : rows.front().gamma.size();
    for (Eigen::Index k = 0; k < dims; ++k)
        table.header.push_back("p" + std::to_string(k));
    for (const auto& row : rows)
    {
        if (row.gamma.size() != dims)
            throw std::invalid_argument("write_estimates: mixed parameter dimensions");
        std::vector<std::string> f{row.subject_id, row.item_id, to_string(row.kind), io::format_double(row.weight)};
        const Eigen::VectorXd g = row.gamma.concatenated();
        for (Eigen::Index k = 0; k < dims; ++k)
            f.push_back(io::format_double(g(k)));
        table.rows.push_back(std::move(f));
    }
    io::write_csv(path, table);
}

std::map<std::string, std::vector<TemplateItem>> group_templates(std::span<const EstimateRow> rows)
{
    std::map<std::string, std::vector<TemplateItem>> templates;
    // Position of each video item within its template, keyed by (subject, item).
    std::map<std::pair<std::string, std::string>, std::size_t> video_slot;
    for (const auto& row : rows)
    {
        auto& items = templates[row.subject_id];
        if (row.kind == ItemKind::video)
        {
            const auto key = std::make_pair(row.subject_id, row.item_id);
            auto it = video_slot.find(key);
            if (it == video_slot.end())
            {
                it = video_slot.emplace(key, items.size()).first;
                items.push_back({ItemKind::video, {}});
            }
            items[it->second].estimates.push_back({row.gamma, row.weight});
        } else
        {
            items.push_back({ItemKind::still_image, {{row.gamma, row.weight}}});
        }
    }
    return templates;
}

std::map<std::string, ParamVector> pool_by_subject(std::span<const EstimateRow> rows, PoolMode mode)
{
    std::map<std::string, ParamVector> pooled;
    if (mode == PoolMode::template_)
    {
        for (const auto& [subject, items] : group_templates(rows))
            pooled.emplace(subject, pool_template(items));
        return pooled;
    }
    std::map<std::string, std::vector<WeightedEstimate>> by_subject;
    for (const auto& row : rows)
        by_subject[row.subject_id].push_back({row.gamma, row.weight});
    for (const auto& [subject, estimates] : by_subject)
        pooled.emplace(subject, pool(estimates));
    return pooled;
}

void write_pooled(const std::filesystem::path& path, const std::map<std::string, ParamVector>& pooled)
{
    io::CsvTable table;
    table.header = {"subject_id"};
    const Eigen::Index dims = pooled.empty() ? 0 : pooled.begin()->second.size();
    for (Eigen::Index k = 0; k < dims; ++k)
        table.header.push_back("p" + std::to_string(k));
    for (const auto& [subject, gamma] : pooled)
    {
        std::vector<std::string> f{subject};
        const Eigen::VectorXd g = gamma.concatenated();
        for (Eigen::Index k = 0; k < g.size(); ++k)
            f.push_back(io::format_double(g(k)));
        table.rows.push_back(std::move(f));
    }
    io::write_csv(path, table);
}

std::map<std::string, ParamVector> read_pooled(const std::filesystem::path& path, Eigen::Index shape_dims)
{
    const io::CsvTable table = io::read_csv(path);
    if (table.header.size() < 2)
        throw std::runtime_error("'" + path.string() + "': expected an id column followed by parameter columns");
    const auto dims = static_cast<Eigen::Index>(table.header.size() - 1);
    if (shape_dims < 0 || shape_dims > dims)
        throw std::runtime_error("'" + path.string() + "': " + std::to_string(dims) +
                                 " parameter columns cannot hold " + std::to_string(shape_dims) + " shape coefficients");
    std::map<std::string, ParamVector> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
    {
        const std::string where = path.filename().string() + " row " + std::to_string(r + 1);
        Eigen::VectorXd g(dims);
        for (Eigen::Index k = 0; k < dims; ++k)
            g(k) = io::parse_double(table.rows[r][static_cast<std::size_t>(k + 1)], where);
        if (!out.emplace(table.rows[r][0], ParamVector::from_concatenated(g, shape_dims)).second)
            throw std::runtime_error(where + ": duplicate id '" + table.rows[r][0] + "'");
    }
    return out;
}

} // namespace cnn3dmm::pooling
