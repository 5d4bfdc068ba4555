/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tools/commands.cpp
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
#include "commands.hpp"

#include "cnn3dmm/csv.hpp"
#include "cnn3dmm/matching.hpp"
#include "cnn3dmm/mesh.hpp"
#include "cnn3dmm/pooling.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace cnn3dmm::cli {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// Aligned text view of a one-row table.
void print_pretty(std::ostream& out, const std::vector<std::string>& header, const std::vector<std::string>& row)
{
    std::string top, bottom;
    for (std::size_t i = 0; i < header.size(); ++i)
    {
        const std::size_t w = std::max(header[i].size(), row[i].size()) + 2;
        top += std::string(w - header[i].size(), ' ') + header[i];
        bottom += std::string(w - row[i].size(), ' ') + row[i];
    }
    out << top << '\n' << bottom << '\n';
}

void emit_table(const io::CsvTable& table, const std::string& path, std::ostream& out)
{
    if (path.empty())
        out << io::to_csv_string(table);
    else
        io::write_csv(path, table);
}

std::size_t count_set(std::initializer_list<const std::string*> fields)
{
    return static_cast<std::size_t>(std::count_if(fields.begin(), fields.end(), [](auto* s) { return !s->empty(); }));
}

// Row ids of a features file: "<subject>#<k>" with k counting that subject's rows.
std::vector<std::string> sample_ids(const std::vector<std::string>& subjects)
{
    std::map<std::string, int> seen;
    std::vector<std::string> ids;
    ids.reserve(subjects.size());
    for (const auto& s : subjects)
        ids.push_back(s + "#" + std::to_string(seen[s]++));
    return ids;
}

std::vector<ParamVector> predict_all(const regressor::Regressor& reg, const regressor::Dataset& d)
{
    if (d.features.cols() != reg.input_dim())
        throw std::runtime_error("features have " + std::to_string(d.features.cols()) + " columns, checkpoint expects " +
                                 std::to_string(reg.input_dim()));
    std::vector<ParamVector> out;
    out.reserve(static_cast<std::size_t>(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i)
        out.push_back(regressor::predict(reg, d.features.row(i).transpose()));
    return out;
}

} // namespace

void make_model(const MakeModelOptions& o, std::ostream& log)
{
    const MorphableModel model = generate_synthetic_model(o.seed, o.vertices, o.shape_dims, o.texture_dims);
    save_model(model, o.out);
    // Exported from the stored float32 model so it matches what synth later reads.
    if (!o.mean_ply.empty())
        write_ply(mean_mesh(load_model(o.out)), o.mean_ply);
    log << "model: " << model.num_vertices() << " vertices, " << model.shape_dims() << " shape and "
        << model.texture_dims() << " texture components -> " << o.out << '\n';
}

void synth(const SynthOptions& o, std::ostream& log)
{
    if (o.random == !o.params.empty())
        throw UsageError("synth: give exactly one of --params or --random");
    const MorphableModel model = load_model(o.model);

    ParamVector gamma;
    if (o.random)
    {
        std::mt19937_64 rng(o.seed);
        gamma = sample_prior(model, rng);
        if (o.whitened)
            log << "note: --whitened has no effect with --random\n";
    } else
    {
        const auto rows = pooling::read_pooled(o.params, model.shape_dims());
        if (rows.empty())
            throw std::runtime_error("'" + o.params + "' holds no parameter rows");
        if (o.id.empty() && rows.size() > 1)
            throw UsageError("synth: '" + o.params + "' holds " + std::to_string(rows.size()) +
                             " rows, choose one with --id");
        const auto it = o.id.empty() ? rows.begin() : rows.find(o.id);
        if (it == rows.end())
            throw std::runtime_error("'" + o.params + "' has no row '" + o.id + "'");
        gamma = o.whitened ? unwhiten(model, it->second) : it->second;
    }
    write_ply(synthesize(model, gamma), o.out);
    log << "wrote " << o.out << '\n';
}

void pool(const PoolOptions& o, std::ostream& log)
{
    pooling::PoolMode mode;
    if (o.mode == "weighted")
        mode = pooling::PoolMode::weighted;
    else if (o.mode == "template")
        mode = pooling::PoolMode::template_;
    else
        throw UsageError("pool: --mode must be 'weighted' or 'template'");
    const auto rows = pooling::read_estimates(o.estimates, o.shape_dims);
    const auto pooled = pooling::pool_by_subject(rows, mode);
    pooling::write_pooled(o.out, pooled);
    log << "pooled " << rows.size() << " estimates into " << pooled.size() << " subjects\n";
}

void make_task(const MakeTaskOptions& o, std::ostream& log)
{
    const MorphableModel model = load_model(o.model);
    const auto task = regressor::make_synthetic_task(o.seed, static_cast<std::size_t>(o.subjects),
                                                     static_cast<std::size_t>(o.images_per_subject), o.feature_dim,
                                                     o.noise, model.shape_sigmas(), model.texture_sigmas(),
                                                     o.val_fraction);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    regressor::write_dataset(task.train, dir / "train_features.csv", dir / "train_targets.csv");
    regressor::write_dataset(task.val, dir / "val_features.csv", dir / "val_targets.csv");

    // Validation protocol: every same-subject pair, plus as many different-subject
    // pairs obtained by pairing with the following subjects in turn.
    std::vector<std::string> subjects;
    std::map<std::string, int> images;
    for (const auto& s : task.val.subject_ids)
        if (images[s]++ == 0)
            subjects.push_back(s);
    std::vector<matching::Pair> pairs;
    const std::size_t n = subjects.size();
    for (std::size_t i = 0; i < n; ++i)
    {
        const int m = images[subjects[i]];
        int j = 0;
        for (int k = 0; k < m; ++k)
            for (int l = k + 1; l < m; ++l, ++j)
            {
                pairs.push_back({subjects[i] + "#" + std::to_string(k), subjects[i] + "#" + std::to_string(l), true});
                if (n < 2)
                    continue;
                const std::string& other = subjects[(i + 1 + static_cast<std::size_t>(j) % (n - 1)) % n];
                const int lo = std::min(l, images[other] - 1);
                pairs.push_back({subjects[i] + "#" + std::to_string(k), other + "#" + std::to_string(lo), false});
            }
    }
    matching::write_pairs(dir / "val_pairs.csv", pairs);

    // Identification protocol: image 0 of every subject forms the gallery, the rest are probes.
    io::CsvTable gallery{{"template_id", "item_id", "kind"}, {}};
    io::CsvTable probes{{"probe_id", "probe_identity"}, {}};
    for (const auto& s : subjects)
    {
        gallery.rows.push_back({s, s + "#0", "still"});
        for (int k = 1; k < images[s]; ++k)
            probes.rows.push_back({s + "#" + std::to_string(k), s});
    }
    io::write_csv(dir / "val_gallery.csv", gallery);
    io::write_csv(dir / "val_probes.csv", probes);

    log << "task: " << task.train.size() << " training and " << task.val.size() << " validation samples, "
        << pairs.size() << " validation pairs -> " << dir.string() << '\n';
}

void train(const TrainOptions& o, std::ostream& log)
{
    const auto tr = regressor::read_dataset(o.train_features, o.train_targets, o.shape_dims);
    const auto val = regressor::read_dataset(o.val_features, o.val_targets, o.shape_dims);
    const auto result = regressor::train(tr, val, o.config);
    regressor::save_checkpoint(result.regressor, o.out);
    if (!o.log.empty())
        regressor::write_train_log(result.log, o.log);
    const auto& best = result.log.epochs[static_cast<std::size_t>(result.log.best_epoch)];
    log << "trained " << result.log.epochs.size() - 1 << " epochs (" << result.log.stop_reason << "), best epoch "
        << result.log.best_epoch << " val loss " << best.val_loss << " -> " << o.out << '\n';
}

void match(const MatchOptions& o, std::ostream& log)
{
    const std::size_t sources = count_set({&o.descriptors, &o.params, &o.estimates, &o.checkpoint});
    if (sources != 1)
        throw UsageError("match: give exactly one of --descriptors, --params, --estimates or --checkpoint");
    if (o.checkpoint.empty() != o.features.empty())
        throw UsageError("match: --checkpoint and --features go together");
    if (o.pairs.empty() && o.probes.empty())
        throw UsageError("match: nothing to do, give --pairs and/or --probes");
    if (!o.pairs.empty() && o.out.empty())
        throw UsageError("match: --pairs needs --out");
    if (o.probes.empty() != o.gallery_templates.empty() || o.probes.empty() != o.identification_out.empty())
        throw UsageError("match: --probes, --gallery-templates and --identification-out go together");
    if (!o.descriptors.empty() && (!o.templates.empty() || !o.gallery_templates.empty()))
        throw UsageError("match: templates need parameter estimates, not --descriptors");

    std::map<std::string, matching::Descriptor> descriptors;
    std::map<std::string, std::vector<ParamVector>> items;
    std::optional<matching::PcaTransform> pca;

    if (!o.descriptors.empty())
    {
        descriptors = matching::read_descriptors(o.descriptors);
    } else
    {
        std::optional<regressor::LinearRegressor> reg;
        if (!o.params.empty())
        {
            for (auto& [id, g] : pooling::read_pooled(o.params, o.shape_dims))
                items[id].push_back(std::move(g));
        } else if (!o.estimates.empty())
        {
            for (auto& row : pooling::read_estimates(o.estimates, o.shape_dims))
                items[row.item_id].push_back(std::move(row.gamma));
        } else
        {
            reg = regressor::load_checkpoint(o.checkpoint);
            const auto feats = regressor::read_features(o.features);
            const auto ids = sample_ids(feats.subject_ids);
            auto preds = predict_all(*reg, feats);
            for (std::size_t i = 0; i < ids.size(); ++i)
                items[ids[i]].push_back(std::move(preds[i]));
        }

        if (count_set({&o.pca_features, &o.pca_params}) != 1)
            throw UsageError("match: give exactly one of --pca-features or --pca-params (training split)");
        std::vector<ParamVector> training;
        if (!o.pca_features.empty())
        {
            if (!reg)
                throw UsageError("match: --pca-features needs --checkpoint");
            training = predict_all(*reg, regressor::read_features(o.pca_features));
        } else
        {
            for (auto& [id, g] : pooling::read_pooled(o.pca_params, o.shape_dims))
                training.push_back(std::move(g));
        }
        std::optional<Eigen::Index> dims;
        if (o.pca_dims > 0)
            dims = o.pca_dims;
        pca = matching::fit_pca(std::span<const ParamVector>(training), dims);
        log << "pca: " << pca->components.cols() << " components from " << training.size() << " training estimates\n";

        if (!o.templates.empty())
        {
            descriptors = matching::template_descriptors(matching::read_templates(o.templates, items), *pca);
        } else
        {
            for (const auto& [id, gammas] : items)
            {
                if (gammas.size() == 1)
                {
                    descriptors.emplace(id, matching::embed(gammas.front(), *pca));
                    continue;
                }
                pooling::TemplateItem video{pooling::ItemKind::video, {}};
                for (const auto& g : gammas)
                    video.estimates.push_back({g, 1.0});
                descriptors.emplace(id, matching::embed(pooling::pool_template(std::span(&video, 1)), *pca));
            }
        }
    }
    if (!o.write_descriptors.empty())
        matching::write_descriptors(o.write_descriptors, descriptors);

    if (!o.pairs.empty())
    {
        const auto pairs = matching::read_pairs(o.pairs);
        const auto scores = matching::score_pairs(pairs, descriptors);
        matching::write_scores(o.out, scores);
        log << "scored " << scores.size() << " pairs -> " << o.out << '\n';
    }

    if (!o.probes.empty())
    {
        const auto gallery = matching::template_descriptors(matching::read_templates(o.gallery_templates, items), *pca);
        const io::CsvTable probes = io::read_csv(o.probes);
        if (probes.header.size() != 2)
            throw std::runtime_error("'" + o.probes + "': expected columns probe_id,probe_identity");
        std::vector<metrics::IdentificationScore> scores;
        for (std::size_t r = 0; r < probes.rows.size(); ++r)
        {
            const auto& row = probes.rows[r];
            const auto it = descriptors.find(row[0]);
            if (it == descriptors.end())
                throw std::out_of_range("'" + o.probes + "' row " + std::to_string(r + 1) + ": unknown probe '" +
                                        row[0] + "'");
            for (const auto& [gid, gd] : gallery)
                scores.push_back({row[0], row[1], gid, matching::similarity(it->second, gd)});
        }
        metrics::write_identification(o.identification_out, scores);
        log << "scored " << probes.rows.size() << " probes against " << gallery.size() << " gallery templates -> "
            << o.identification_out << '\n';
    }
}

void eval(const EvalOptions& o, std::ostream& out, std::ostream& log)
{
    const bool mesh_mode = !o.estimate.empty() || !o.ground_truth.empty();
    if (mesh_mode && (o.estimate.empty() || o.ground_truth.empty()))
        throw UsageError("eval: --estimate and --ground-truth go together");
    if (mesh_mode && (!o.scores.empty() || !o.identification.empty()))
        throw UsageError("eval: meshes and scores cannot be evaluated in one run");
    if (!mesh_mode && o.scores.empty() && o.identification.empty())
        throw UsageError("eval: give two meshes, --scores and/or --identification");

    io::CsvTable table;
    std::vector<std::string> pretty_header, pretty_row;
    table.rows.emplace_back();
    auto add = [&](const std::string& name, double v, const std::string& pretty_name, const std::string& pretty_value) {
        table.header.push_back(name);
        table.rows.back().push_back(io::format_double(v));
        pretty_header.push_back(pretty_name);
        pretty_row.push_back(pretty_value);
    };

    if (mesh_mode)
    {
        metrics::ShapeEvalOptions shape = o.shape;
        if (o.nose_index >= 0)
            shape.nose_index = static_cast<std::uint32_t>(o.nose_index);
        const auto result = metrics::evaluate_shape(read_ply(o.estimate), read_ply(o.ground_truth), shape);
        if (!o.depth_out.empty())
        {
            metrics::write_depth_pgm(result.estimate_depth, o.depth_out + "_estimate.pgm");
            metrics::write_depth_pgm(result.ground_truth_depth, o.depth_out + "_ground_truth.pgm");
        }
        log << "icp: " << result.icp.residuals.size() - 1 << " iterations, residual " << result.icp.residuals.back()
            << " mm\n";
        const auto& e = result.errors;
        add("3drmse", e.rmse3d, "3DRMSE", fixed(e.rmse3d, 4));
        add("rmse", e.rmse, "RMSE", fixed(e.rmse, 4));
        add("log10", e.log10, "log10x1e4", fixed(e.log10 * 1e4, 2));
        add("rel", e.rel, "Relx1e4", fixed(e.rel * 1e4, 2));
    } else
    {
        if (!o.scores.empty())
        {
            const auto scored = matching::read_scores(o.scores);
            std::vector<metrics::LabeledScore> labeled;
            labeled.reserve(scored.size());
            for (const auto& s : scored)
                labeled.push_back({s.score, s.same});
            const auto m = metrics::verification_metrics(labeled);
            // With identification present the row follows the template-benchmark layout.
            if (o.identification.empty())
            {
                add("accuracy", m.accuracy, "Accuracy", fixed(100 * m.accuracy, 2));
                add("one_minus_eer", 1.0 - m.eer, "100%-EER", fixed(100 * (1.0 - m.eer), 2));
                add("auc", m.auc, "AUC", fixed(100 * m.auc, 2));
            }
            add("tar_at_far_10", m.tar_at_far_10, "TAR-10%", fixed(100 * m.tar_at_far_10, 2));
            add("tar_at_far_1", m.tar_at_far_1, "TAR-1%", fixed(100 * m.tar_at_far_1, 2));
        }
        if (!o.identification.empty())
        {
            const auto rates = metrics::cmc(metrics::read_identification(o.identification));
            for (int k : o.ranks)
            {
                if (k < 1)
                    throw UsageError("eval: ranks must be positive");
                const double r = rates[std::min<std::size_t>(static_cast<std::size_t>(k), rates.size()) - 1];
                add("rank_" + std::to_string(k), r, "Rank-" + std::to_string(k), fixed(100 * r, 2));
            }
        }
    }

    emit_table(table, o.out, out);
    if (o.pretty)
        print_pretty(o.out.empty() ? log : out, pretty_header, pretty_row);
}

bool gradcheck(const GradcheckOptions& o, std::ostream& out)
{
    if (o.points < 1)
        throw UsageError("gradcheck: --points must be positive");
    const auto report = loss::gradient_check(o.seed, o.dims, static_cast<std::size_t>(o.points), o.loss, o.h,
                                             o.kink_margin);
    const bool pass = report.max_relative_error < o.threshold;
    io::CsvTable t{{"max_relative_error", "points_checked", "points_rejected", "threshold", "result"}, {}};
    t.rows.push_back({io::format_double(report.max_relative_error), std::to_string(report.points_checked),
                      std::to_string(report.points_rejected), io::format_double(o.threshold), pass ? "pass" : "fail"});
    out << io::to_csv_string(t);
    return pass;
}

} // namespace cnn3dmm::cli
