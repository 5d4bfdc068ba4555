/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/metrics.cpp
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
#include "cnn3dmm/metrics.hpp"
#include "cnn3dmm/csv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace cnn3dmm::metrics {

double rmse3d(std::span<const Eigen::Vector3d> x, std::span<const Eigen::Vector3d> y, bool literal)
{
    if (x.empty() || x.size() != y.size())
        throw std::invalid_argument("rmse3d: point sets must be non-empty and of equal size (" +
                                    std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        sum += (x[i] - y[i]).squaredNorm();
    const double n = static_cast<double>(x.size());
    return literal ? std::sqrt(sum) / n : std::sqrt(sum / n);
}

ShapeErrors shape_errors(std::span<const Eigen::Vector3d> x, std::span<const Eigen::Vector3d> x_star,
                         const DepthMap& d, const DepthMap& d_star, bool literal)
{
    if (d.width != d_star.width || d.height != d_star.height)
        throw std::invalid_argument("shape_errors: depth maps differ in size (" + std::to_string(d.width) + "x" +
                                    std::to_string(d.height) + " vs " + std::to_string(d_star.width) + "x" +
                                    std::to_string(d_star.height) + ")");
    ShapeErrors e;
    e.rmse3d = rmse3d(x, x_star, literal);

    double sq = 0.0, lg = 0.0, rel = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.depth.size(); ++i)
    {
        const double a = d.depth[i], b = d_star.depth[i];
        if (!std::isfinite(a) || !std::isfinite(b))
            continue;
        if (a <= 0.0 || b <= 0.0)
            throw std::invalid_argument("shape_errors: non-positive depth at pixel " + std::to_string(i));
        sq += (a - b) * (a - b);
        lg += std::abs(std::log10(a) - std::log10(b));
        rel += std::abs(a - b) / std::abs(b);
        ++n;
    }
    if (n == 0)
        throw std::invalid_argument("shape_errors: the depth maps share no valid pixel");
    const double np = static_cast<double>(n);
    e.rmse = std::sqrt(sq / np);
    e.log10 = lg / np;
    e.rel = rel / np;
    return e;
}

ShapeEvaluation evaluate_shape(const Mesh& estimate, const Mesh& ground_truth, const ShapeEvalOptions& options)
{
    const std::uint32_t est_nose = options.nose_index.value_or(max_z_vertex(estimate));
    const std::uint32_t gt_nose = options.nose_index.value_or(max_z_vertex(ground_truth));
    const Mesh est_crop = crop_radius(estimate, est_nose, options.crop_radius);
    const Mesh gt_crop = crop_radius(ground_truth, gt_nose, options.crop_radius);

    ShapeEvaluation out;
    out.icp = icp_align(est_crop, gt_crop, options.icp);
    const std::vector<Eigen::Vector3d> x_star = resample_nearest(out.icp.aligned, gt_crop);

    const Eigen::Vector2d center = centroid(gt_crop).head<2>();
    out.estimate_depth = render_depth(out.icp.aligned, options.width, options.height, options.pixel_scale, center);
    out.ground_truth_depth = render_depth(gt_crop, options.width, options.height, options.pixel_scale, center);
    out.errors = shape_errors(out.icp.aligned.positions, x_star, out.estimate_depth, out.ground_truth_depth,
                              options.literal_rmse3d);
    return out;
}

namespace {

struct Counts
{
    double threshold;
    std::size_t tp;
    std::size_t fp;
};

// Cumulative accept counts per distinct threshold, descending, led by +inf.
std::vector<Counts> sweep(std::span<const LabeledScore> scores, std::size_t& positives, std::size_t& negatives)
{
    positives = negatives = 0;
    for (const auto& s : scores)
    {
        if (!std::isfinite(s.score))
            throw std::invalid_argument("verification scores must be finite");
        (s.positive ? positives : negatives)++;
    }
    if (positives == 0 || negatives == 0)
        throw std::invalid_argument("verification needs at least one positive and one negative pair (got " +
                                    std::to_string(positives) + " and " + std::to_string(negatives) + ")");

    std::vector<LabeledScore> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(), [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
    std::vector<Counts> out{{std::numeric_limits<double>::infinity(), 0, 0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < sorted.size();)
    {
        const double t = sorted[i].score;
        for (; i < sorted.size() && sorted[i].score == t; ++i)
            (sorted[i].positive ? tp : fp)++;
        out.push_back({t, tp, fp});
    }
    return out;
}

} // namespace

std::vector<RocPoint> roc_curve(std::span<const LabeledScore> scores)
{
    std::size_t p = 0, n = 0;
    const auto counts = sweep(scores, p, n);
    std::vector<RocPoint> roc;
    roc.reserve(counts.size());
    for (const auto& c : counts)
        roc.push_back({c.threshold, static_cast<double>(c.fp) / static_cast<double>(n),
                       static_cast<double>(c.tp) / static_cast<double>(p)});
    return roc;
}

double auc(std::span<const RocPoint> roc)
{
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].far - roc[i - 1].far) * (roc[i].tar + roc[i - 1].tar) * 0.5;
    return area;
}

double tar_at_far(std::span<const RocPoint> roc, double far)
{
    if (roc.empty())
        throw std::invalid_argument("tar_at_far: empty curve");
    if (!(far >= 0.0 && far <= 1.0))
        throw std::invalid_argument("tar_at_far: false accept rate must lie in [0, 1]");
    double best = -1.0;
    for (const auto& pt : roc)
        if (pt.far == far)
            best = std::max(best, pt.tar);
    if (best >= 0.0)
        return best;
    for (std::size_t i = 1; i < roc.size(); ++i)
    {
        if (roc[i].far > far)
        {
            const auto& a = roc[i - 1];
            const auto& b = roc[i];
            return a.tar + (far - a.far) / (b.far - a.far) * (b.tar - a.tar);
        }
    }
    return roc.back().tar;
}

double equal_error_rate(std::span<const RocPoint> roc)
{
    if (roc.empty())
        throw std::invalid_argument("equal_error_rate: empty curve");
    // g = FAR - FRR rises from -1 at the strictest threshold to +1 at the most lenient.
    auto g = [](const RocPoint& pt) { return pt.far - (1.0 - pt.tar); };
    for (std::size_t i = 0; i < roc.size(); ++i)
    {
        const double gi = g(roc[i]);
        if (gi < 0.0)
            continue;
        if (gi == 0.0 || i == 0)
            return roc[i].far;
        const double gp = g(roc[i - 1]);
        const double t = -gp / (gi - gp);
        return roc[i - 1].far + t * (roc[i].far - roc[i - 1].far);
    }
    return roc.back().far;
}

VerificationMetrics verification_metrics(std::span<const LabeledScore> scores)
{
    std::size_t p = 0, n = 0;
    const auto counts = sweep(scores, p, n);
    VerificationMetrics m;
    std::size_t best_correct = 0;
    for (const auto& c : counts)
        best_correct = std::max(best_correct, c.tp + (n - c.fp));
    m.accuracy = static_cast<double>(best_correct) / static_cast<double>(p + n);

    const auto roc = roc_curve(scores);
    m.auc = auc(roc);
    m.eer = equal_error_rate(roc);
    m.tar_at_far_10 = tar_at_far(roc, 0.10);
    m.tar_at_far_1 = tar_at_far(roc, 0.01);
    return m;
}

std::vector<double> cmc(std::span<const IdentificationScore> scores)
{
    if (scores.empty())
        throw std::invalid_argument("cmc: no scores");
    std::map<std::string, std::vector<const IdentificationScore*>> by_probe;
    std::set<std::string> gallery;
    for (const auto& s : scores)
    {
        if (!std::isfinite(s.score))
            throw std::invalid_argument("cmc: non-finite score for probe '" + s.probe_id + "'");
        by_probe[s.probe_id].push_back(&s);
        gallery.insert(s.gallery_id);
    }

    const std::size_t g = gallery.size();
    std::vector<std::size_t> hits(g, 0);
    for (const auto& [probe, rows] : by_probe)
    {
        const std::string& identity = rows.front()->probe_identity;
        std::set<std::string> seen;
        const IdentificationScore* mate = nullptr;
        for (const auto* r : rows)
        {
            if (r->probe_identity != identity)
                throw std::invalid_argument("cmc: probe '" + probe + "' has conflicting identities");
            if (!seen.insert(r->gallery_id).second)
                throw std::invalid_argument("cmc: probe '" + probe + "' scored twice against '" + r->gallery_id + "'");
            if (r->gallery_id == identity)
                mate = r;
        }
        if (!mate)
            throw std::invalid_argument("cmc: probe '" + probe + "' has no mate '" + identity + "' in the gallery");
        std::size_t rank = 1;
        for (const auto* r : rows)
            if (r->score > mate->score || (r->score == mate->score && r->gallery_id < mate->gallery_id))
                ++rank;
        ++hits[rank - 1];
    }

    std::vector<double> rates(g);
    std::size_t cumulative = 0;
    for (std::size_t k = 0; k < g; ++k)
    {
        cumulative += hits[k];
        rates[k] = static_cast<double>(cumulative) / static_cast<double>(by_probe.size());
    }
    return rates;
}

std::vector<IdentificationScore> read_identification(const std::filesystem::path& path)
{
    const io::CsvTable t = io::read_csv(path);
    if (t.header.size() != 4)
        throw std::runtime_error("'" + path.string() + "': expected columns probe_id,probe_identity,gallery_id,score");
    std::vector<IdentificationScore> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        out.push_back({t.rows[r][0], t.rows[r][1], t.rows[r][2],
                       io::parse_double(t.rows[r][3], path.filename().string() + " row " + std::to_string(r + 1))});
    return out;
}

void write_identification(const std::filesystem::path& path, std::span<const IdentificationScore> scores)
{
    io::CsvTable t;
    t.header = {"probe_id", "probe_identity", "gallery_id", "score"};
    for (const auto& s : scores)
        t.rows.push_back({s.probe_id, s.probe_identity, s.gallery_id, io::format_double(s.score)});
    io::write_csv(path, t);
}

} // namespace cnn3dmm::metrics
