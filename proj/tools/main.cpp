/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: tools/main.cpp
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

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

using namespace cnn3dmm;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

// Echoes the resolved options of the subcommand that ran.
void write_config(const CLI::App& app, const std::string& path)
{
    const std::string prefix = app.get_subcommands().front()->get_name() + ".";
    std::istringstream all(app.config_to_str(true, false));
    std::string text, line;
    while (std::getline(all, line))
        if (line.rfind(prefix, 0) == 0)
            text += line + "\n";
    if (path == "-")
    {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"cnn3dmm: 3D morphable face model synthesis, pooling, regression training and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML config file; sections are named after subcommands");
    app.allow_config_extras(CLI::config_extras_mode::error);
    std::string echo_path;
    app.add_option("--write-config", echo_path, "Write the fully resolved configuration to this file ('-' for stdout)")
        ->configurable(false);

    cli::MakeModelOptions mm;
    auto* c_mm = app.add_subcommand("make-model", "Generate a synthetic morphable model");
    c_mm->add_option("--out", mm.out, "Model container to write")->required();
    c_mm->add_option("--seed", mm.seed, "Random seed")->capture_default_str();
    c_mm->add_option("--vertices", mm.vertices, "Number of vertices (>= 16)")->capture_default_str();
    c_mm->add_option("--shape-dims", mm.shape_dims, "Shape components")->capture_default_str();
    c_mm->add_option("--texture-dims", mm.texture_dims, "Texture components")->capture_default_str();
    c_mm->add_option("--mean-ply", mm.mean_ply, "Also export the mean face as PLY");

    cli::SynthOptions sy;
    auto* c_sy = app.add_subcommand("synth", "Synthesize a face mesh from coefficients");
    c_sy->add_option("--model", sy.model, "Model container")->required();
    c_sy->add_option("--out", sy.out, "PLY file to write")->required();
    c_sy->add_option("--params", sy.params, "Parameter CSV (id,p0..)");
    c_sy->add_option("--id", sy.id, "Row of --params to use");
    c_sy->add_flag("--random", sy.random, "Draw coefficients from the model prior");
    c_sy->add_flag("--whitened", sy.whitened, "--params holds multiples of the component sigmas");
    c_sy->add_option("--seed", sy.seed, "Random seed for --random")->capture_default_str();

    cli::PoolOptions po;
    auto* c_po = app.add_subcommand("pool", "Pool per-image estimates into one estimate per subject");
    c_po->add_option("--estimates", po.estimates, "Estimate list CSV")->required();
    c_po->add_option("--out", po.out, "Pooled CSV to write")->required();
    c_po->add_option("--mode", po.mode, "weighted | template")
        ->check(CLI::IsMember({"weighted", "template"}))
        ->capture_default_str();
    c_po->add_option("--shape-dims", po.shape_dims, "Leading shape coefficients per row")->capture_default_str();

    cli::MakeTaskOptions mt;
    auto* c_mt = app.add_subcommand("make-task", "Generate a synthetic regression task with validation protocols");
    c_mt->add_option("--model", mt.model, "Model container supplying the coefficient sigmas")->required();
    c_mt->add_option("--out-dir", mt.out_dir, "Output directory")->required();
    c_mt->add_option("--seed", mt.seed, "Random seed")->capture_default_str();
    c_mt->add_option("--subjects", mt.subjects, "Number of subjects")->capture_default_str();
    c_mt->add_option("--images-per-subject", mt.images_per_subject, "Samples per subject")->capture_default_str();
    c_mt->add_option("--feature-dim", mt.feature_dim, "Feature dimension")->capture_default_str();
    c_mt->add_option("--noise", mt.noise, "Feature noise sigma")->capture_default_str();
    c_mt->add_option("--val-fraction", mt.val_fraction, "Fraction of subjects held out")->capture_default_str();

    cli::TrainOptions tr;
    auto& tc = tr.config;
    auto* c_tr = app.add_subcommand("train", "Train the regression head with SGD");
    c_tr->add_option("--train-features", tr.train_features, "Training features CSV")->required();
    c_tr->add_option("--train-targets", tr.train_targets, "Training targets CSV")->required();
    c_tr->add_option("--val-features", tr.val_features, "Validation features CSV")->required();
    c_tr->add_option("--val-targets", tr.val_targets, "Validation targets CSV")->required();
    c_tr->add_option("--out", tr.out, "Checkpoint to write")->required();
    c_tr->add_option("--log", tr.log, "Per-epoch log CSV");
    c_tr->add_option("--shape-dims", tr.shape_dims, "Leading shape coefficients per target")->capture_default_str();
    c_tr->add_option("--batch-size", tc.batch_size, "Mini-batch size")->capture_default_str();
    c_tr->add_option("--momentum", tc.momentum, "SGD momentum")->capture_default_str();
    c_tr->add_option("--weight-decay", tc.weight_decay, "L2 weight decay")->capture_default_str();
    c_tr->add_option("--lr", tc.lr_head, "Initial learning rate")->capture_default_str();
    c_tr->add_option("--lr-decay", tc.lr_decay_factor, "Learning rate factor on a plateau")->capture_default_str();
    c_tr->add_option("--patience", tc.patience, "Epochs without improvement before decaying")->capture_default_str();
    c_tr->add_option("--lr-floor-ratio", tc.lr_floor_ratio, "Stop below this fraction of the initial rate")
        ->capture_default_str();
    c_tr->add_option("--max-epochs", tc.max_epochs, "Epoch limit")->capture_default_str();
    c_tr->add_option("--seed", tc.seed, "Shuffling seed")->capture_default_str();
    c_tr->add_option("--lambda-over", tc.loss.lambda_over, "Weight of over-estimates")->capture_default_str();
    c_tr->add_option("--lambda-under", tc.loss.lambda_under, "Weight of under-estimates")->capture_default_str();

    cli::MatchOptions ma;
    auto* c_ma = app.add_subcommand("match", "Embed estimates and score verification or identification protocols");
    c_ma->add_option("--descriptors", ma.descriptors, "Precomputed descriptor CSV");
    c_ma->add_option("--params", ma.params, "Parameter CSV (id,p0..)");
    c_ma->add_option("--estimates", ma.estimates, "Estimate list CSV, keyed by item_id");
    c_ma->add_option("--checkpoint", ma.checkpoint, "Regressor checkpoint");
    c_ma->add_option("--features", ma.features, "Features CSV run through --checkpoint; ids are subject#k");
    c_ma->add_option("--pca-features", ma.pca_features, "Training features for the PCA fit");
    c_ma->add_option("--pca-params", ma.pca_params, "Training parameter CSV for the PCA fit");
    c_ma->add_option("--pca-dims", ma.pca_dims, "PCA components (0 = automatic)")->capture_default_str();
    c_ma->add_option("--templates", ma.templates, "Template CSV (template_id,item_id,kind)");
    c_ma->add_option("--pairs", ma.pairs, "Pair list CSV");
    c_ma->add_option("--out", ma.out, "Score CSV to write");
    c_ma->add_option("--probes", ma.probes, "Probe list CSV (probe_id,probe_identity)");
    c_ma->add_option("--gallery-templates", ma.gallery_templates, "Gallery template CSV");
    c_ma->add_option("--identification-out", ma.identification_out, "Identification score CSV to write");
    c_ma->add_option("--write-descriptors", ma.write_descriptors, "Also write the descriptors");
    c_ma->add_option("--shape-dims", ma.shape_dims, "Leading shape coefficients per row")->capture_default_str();

    cli::EvalOptions ev;
    auto& so = ev.shape;
    auto* c_ev = app.add_subcommand("eval", "Shape accuracy of two meshes or recognition metrics of scores");
    c_ev->add_option("--estimate", ev.estimate, "Estimated mesh (PLY)");
    c_ev->add_option("--ground-truth", ev.ground_truth, "Ground-truth mesh (PLY)");
    c_ev->add_option("--scores", ev.scores, "Verification score CSV");
    c_ev->add_option("--identification", ev.identification, "Identification score CSV");
    c_ev->add_option("--ranks", ev.ranks, "CMC ranks to report")->delimiter(',')->capture_default_str();
    c_ev->add_option("--out", ev.out, "Write the metric CSV here instead of stdout");
    c_ev->add_flag("--pretty", ev.pretty, "Also print an aligned table");
    c_ev->add_option("--crop-radius", so.crop_radius, "Crop radius around the nose tip (mm)")->capture_default_str();
    c_ev->add_option("--width", so.width, "Depth map width (pixels)")->capture_default_str();
    c_ev->add_option("--height", so.height, "Depth map height (pixels)")->capture_default_str();
    c_ev->add_option("--pixel-scale", so.pixel_scale, "Depth map mm per pixel")->capture_default_str();
    c_ev->add_flag("--literal-rmse3d", so.literal_rmse3d, "sqrt(sum)/N instead of the root mean square");
    c_ev->add_option("--nose-index", ev.nose_index, "Crop centre vertex for both meshes (-1 = max z)")
        ->capture_default_str();
    c_ev->add_option("--icp-max-iter", so.icp.max_iterations, "ICP iteration limit")->capture_default_str();
    c_ev->add_option("--icp-tol", so.icp.tolerance, "ICP residual improvement threshold (mm)")->capture_default_str();
    c_ev->add_option("--depth-out", ev.depth_out, "Write depth maps as <prefix>_estimate.pgm and _ground_truth.pgm");

    cli::GradcheckOptions gc;
    auto* c_gc = app.add_subcommand("gradcheck", "Compare the analytic loss gradient to finite differences");
    c_gc->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
    c_gc->add_option("--dims", gc.dims, "Vector dimension")->capture_default_str();
    c_gc->add_option("--points", gc.points, "Points to check")->capture_default_str();
    c_gc->add_option("--step", gc.h, "Finite difference step")->capture_default_str();
    c_gc->add_option("--kink-margin", gc.kink_margin, "Minimum distance from a kink")->capture_default_str();
    c_gc->add_option("--threshold", gc.threshold, "Pass threshold on the relative error")->capture_default_str();
    c_gc->add_option("--lambda-over", gc.loss.lambda_over, "Weight of over-estimates")->capture_default_str();
    c_gc->add_option("--lambda-under", gc.loss.lambda_under, "Weight of under-estimates")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e)
    {
        return app.exit(e);
    } catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return kUsageExit;
    }

    try
    {
        if (!echo_path.empty())
            write_config(app, echo_path);

        if (c_mm->parsed())
            cli::make_model(mm, std::cerr);
        else if (c_sy->parsed())
            cli::synth(sy, std::cerr);
        else if (c_po->parsed())
            cli::pool(po, std::cerr);
        else if (c_mt->parsed())
            cli::make_task(mt, std::cerr);
        else if (c_tr->parsed())
            cli::train(tr, std::cerr);
        else if (c_ma->parsed())
            cli::match(ma, std::cerr);
        else if (c_ev->parsed())
            cli::eval(ev, std::cout, std::cerr);
        else if (c_gc->parsed())
            return cli::gradcheck(gc, std::cout) ? 0 : kRuntimeExit;
    } catch (const cli::UsageError& e)
    {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsageExit;
    } catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeExit;
    }
    return 0;
}
