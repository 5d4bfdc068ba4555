/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/regressor.cpp
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
#include "cnn3dmm/regressor.hpp"
#include "cnn3dmm/container.hpp"
#include "cnn3dmm/csv.hpp"
#include "cnn3dmm/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

namespace cnn3dmm::regressor {

LinearRegressor::LinearRegressor(Eigen::Index input_dim, Eigen::Index output_dim, Eigen::Index shape_dims)
    : input_dim_(input_dim), output_dim_(output_dim), shape_dims_(shape_dims)
{
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("LinearRegressor: dimensions must be positive");
    if (shape_dims < 0 || shape_dims > output_dim)
        throw std::invalid_argument("LinearRegressor: shape dims " + std::to_string(shape_dims) +
                                    " exceed output dim " + std::to_string(output_dim));
    params_ = Eigen::VectorXd::Zero(input_dim * output_dim + output_dim);
}

Eigen::Map<Eigen::MatrixXd> LinearRegressor::weights()
{
    return {params_.data(), input_dim_, output_dim_};
}

Eigen::Map<const Eigen::MatrixXd> LinearRegressor::weights() const
{
    return {params_.data(), input_dim_, output_dim_};
}

Eigen::Map<Eigen::VectorXd> LinearRegressor::bias()
{
    return {params_.data() + input_dim_ * output_dim_, output_dim_};
}

Eigen::Map<const Eigen::VectorXd> LinearRegressor::bias() const
{
    return {params_.data() + input_dim_ * output_dim_, output_dim_};
}

Eigen::VectorXd LinearRegressor::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const
{
    if (x.size() != input_dim_)
        throw std::invalid_argument("LinearRegressor: expected " + std::to_string(input_dim_) + " features, got " +
                                    std::to_string(x.size()));
    return weights().transpose() * x + bias();
}

void LinearRegressor::backward(const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& d_output, Eigen::Ref<Eigen::VectorXd> grad) const
{
    const Eigen::Index nw = input_dim_ * output_dim_;
    Eigen::Map<Eigen::MatrixXd> d_weights(grad.data(), input_dim_, output_dim_);
    d_weights.noalias() += x * d_output.transpose();
    grad.segment(nw, output_dim_) += d_output;
}

std::vector<ParameterGroup> LinearRegressor::parameter_groups() const
{
    const Eigen::Index nw = input_dim_ * output_dim_;
    return {{"weights", 0, nw, lr_multiplier_, true}, {"bias", nw, output_dim_, lr_multiplier_, false}};
}

ParamVector predict(const Regressor& reg, const Eigen::Ref<const Eigen::VectorXd>& features)
{
    return ParamVector::from_concatenated(reg.forward(features), reg.shape_dims());
}

void Dataset::validate() const
{
    if (features.rows() != targets.rows() || static_cast<std::size_t>(features.rows()) != subject_ids.size())
        throw std::invalid_argument("dataset: features, targets and subject ids disagree on the sample count");
    if (shape_dims < 0 || shape_dims > targets.cols())
        throw std::invalid_argument("dataset: shape dims exceed target width");
    if (!features.allFinite() || !targets.allFinite())
        throw std::invalid_argument("dataset: non-finite values");
    std::map<std::string, Eigen::Index> first_row;
    for (Eigen::Index i = 0; i < features.rows(); ++i)
    {
        const auto [it, inserted] = first_row.emplace(subject_ids[static_cast<std::size_t>(i)], i);
        if (!inserted && targets.row(i) != targets.row(it->second))
            throw std::invalid_argument("dataset: subject '" + it->first + "' has differing targets");
    }
}

void TrainConfig::validate() const
{
    loss.validate();
    if (batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw std::invalid_argument("weight decay must be non-negative");
    if (!(lr_head > 0.0) || !std::isfinite(lr_head))
        throw std::invalid_argument("learning rate must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
        throw std::invalid_argument("lr decay factor must lie in (0, 1)");
    if (patience < 1)
        throw std::invalid_argument("patience must be at least 1");
    if (!(lr_floor_ratio > 0.0 && lr_floor_ratio <= 1.0))
        throw std::invalid_argument("lr floor ratio must lie in (0, 1]");
    if (!(improvement_tolerance >= 0.0 && improvement_tolerance < 1.0))
        throw std::invalid_argument("improvement tolerance must lie in [0, 1)");
    if (max_epochs < 0)
        throw std::invalid_argument("max epochs must be non-negative");
}

double mean_loss(const Regressor& reg, const Dataset& data, const loss::LossConfig& cfg)
{
    if (data.size() == 0)
        throw std::invalid_argument("mean_loss: empty dataset");
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i)
        total += loss::asymmetric_loss(reg.forward(data.features.row(i).transpose()), data.targets.row(i).transpose(), cfg);
    return total / static_cast<double>(data.size());
}

namespace {

double decay_penalty(const Regressor& reg)
{
    double sq = 0.0;
    for (const auto& g : reg.parameter_groups())
        if (g.weight_decay)
            sq += reg.parameters().segment(g.offset, g.size).squaredNorm();
    return 0.5 * sq;
}

void check_compatible(const Regressor& reg, const Dataset& data, const char* name)
{
    if (data.size() == 0)
        throw std::invalid_argument(std::string(name) + " set is empty");
    if (data.features.cols() != reg.input_dim())
        throw std::invalid_argument(std::string(name) + " set has " + std::to_string(data.features.cols()) +
                                    " features, regressor expects " + std::to_string(reg.input_dim()));
    if (data.targets.cols() != reg.output_dim())
        throw std::invalid_argument(std::string(name) + " set has " + std::to_string(data.targets.cols()) +
                                    " targets, regressor outputs " + std::to_string(reg.output_dim()));
    data.validate();
}

} // namespace

double objective(const Regressor& reg, const Dataset& data, std::span<const Eigen::Index> rows,
                 const loss::LossConfig& cfg, double weight_decay)
{
    if (rows.empty())
        throw std::invalid_argument("objective: empty batch");
    double total = 0.0;
    for (auto i : rows)
        total += loss::asymmetric_loss(reg.forward(data.features.row(i).transpose()), data.targets.row(i).transpose(), cfg);
    return total / static_cast<double>(rows.size()) + weight_decay * decay_penalty(reg);
}

Eigen::VectorXd loss_gradient(const Regressor& reg, const Dataset& data, std::span<const Eigen::Index> rows,
                              const loss::LossConfig& cfg)
{
    if (rows.empty())
        throw std::invalid_argument("loss_gradient: empty batch");
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(reg.parameters().size());
    for (auto i : rows)
    {
        const Eigen::VectorXd x = data.features.row(i).transpose();
        const Eigen::VectorXd d_out = loss::asymmetric_loss_grad(reg.forward(x), data.targets.row(i).transpose(), cfg);
        reg.backward(x, d_out, grad);
    }
    grad /= static_cast<double>(rows.size());
    return grad;
}

Eigen::VectorXd objective_gradient(const Regressor& reg, const Dataset& data, std::span<const Eigen::Index> rows,
                                   const loss::LossConfig& cfg, double weight_decay)
{
    Eigen::VectorXd grad = loss_gradient(reg, data, rows, cfg);
    for (const auto& g : reg.parameter_groups())
        if (g.weight_decay)
            grad.segment(g.offset, g.size) += weight_decay * reg.parameters().segment(g.offset, g.size);
    return grad;
}

void sgd_step(Regressor& reg, Eigen::VectorXd& velocity, const Eigen::Ref<const Eigen::VectorXd>& grad, double lr,
              const TrainConfig& cfg)
{
    Eigen::VectorXd& theta = reg.parameters();
    if (velocity.size() != theta.size())
        velocity = Eigen::VectorXd::Zero(theta.size());
    for (const auto& g : reg.parameter_groups())
    {
        const double group_lr = lr * g.lr_multiplier;
        auto th = theta.segment(g.offset, g.size);
        auto v = velocity.segment(g.offset, g.size);
        if (g.weight_decay)
            th *= 1.0 - group_lr * cfg.weight_decay;
        v = cfg.momentum * v - group_lr * grad.segment(g.offset, g.size);
        th += v;
    }
}

TrainLog train(Regressor& reg, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg)
{
    cfg.validate();
    check_compatible(reg, train_set, "training");
    check_compatible(reg, val_set, "validation");

    TrainLog log;
    auto record = [&](int epoch, double lr) {
        const double train_loss = mean_loss(reg, train_set, cfg.loss);
        const double val_loss = mean_loss(reg, val_set, cfg.loss);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                             " (non-finite loss)");
        log.epochs.push_back({epoch, lr, train_loss, val_loss});
        return val_loss;
    };

    double lr = cfg.lr_head;
    const double lr_floor = cfg.lr_head * cfg.lr_floor_ratio * (1.0 - 1e-9);
    double best = record(0, lr);
    Eigen::VectorXd best_params = reg.parameters();
    int stale = 0;
    log.stop_reason = "max_epochs";

    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Eigen::VectorXd velocity = Eigen::VectorXd::Zero(reg.parameters().size());

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch)
    {
        // Fisher-Yates.
        for (std::size_t i = order.size() - 1; i > 0; --i)
        {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            std::swap(order[i], order[pick(rng)]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size)
        {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            const std::span<const Eigen::Index> batch(order.data() + start, len);
            sgd_step(reg, velocity, loss_gradient(reg, train_set, batch, cfg.loss), lr, cfg);
            if (!reg.parameters().allFinite())
                throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                                 " (non-finite parameters)");
        }

        const double val_loss = record(epoch, lr);
        if (val_loss < best * (1.0 - cfg.improvement_tolerance))
        {
            best = val_loss;
            best_params = reg.parameters();
            log.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience)
        {
            lr *= cfg.lr_decay_factor;
            stale = 0;
            if (lr < lr_floor)
            {
                log.stop_reason = "lr_floor";
                break;
            }
        }
    }
    reg.parameters() = best_params;
    return log;
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg)
{
    LinearRegressor reg(train_set.features.cols(), train_set.targets.cols(), train_set.shape_dims);
    TrainLog log = train(reg, train_set, val_set, cfg);
    return {std::move(reg), std::move(log)};
}

SyntheticTask make_synthetic_task(std::uint64_t seed, std::size_t num_subjects, std::size_t images_per_subject,
                                  Eigen::Index feature_dim, double noise_sigma,
                                  const Eigen::Ref<const Eigen::VectorXd>& shape_sigmas,
                                  const Eigen::Ref<const Eigen::VectorXd>& texture_sigmas, double val_fraction)
{
    if (num_subjects < 2 || images_per_subject < 1 || feature_dim < 1)
        throw std::invalid_argument("make_synthetic_task: need >= 2 subjects, >= 1 image each and >= 1 feature");
    if (!(noise_sigma >= 0.0) || !(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("make_synthetic_task: noise must be >= 0 and val fraction in (0, 1)");
    const Eigen::Index shape_dims = shape_sigmas.size();
    const Eigen::Index out_dim = shape_dims + texture_sigmas.size();
    if (out_dim < 1 || !(shape_sigmas.array() > 0).all() || !(texture_sigmas.array() > 0).all())
        throw std::invalid_argument("make_synthetic_task: sigmas must be positive");
    Eigen::VectorXd sigmas(out_dim);
    sigmas << shape_sigmas, texture_sigmas;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticTask task;
    task.mixing.resize(feature_dim, out_dim);
    for (Eigen::Index c = 0; c < out_dim; ++c)
        for (Eigen::Index r = 0; r < feature_dim; ++r)
            task.mixing(r, c) = normal(rng);
    for (Eigen::Index r = 0; r < feature_dim; ++r)
        task.mixing.row(r) /= task.mixing.row(r).cwiseProduct(sigmas.transpose()).norm();

    std::size_t train_subjects = static_cast<std::size_t>(
        std::ceil((1.0 - val_fraction) * static_cast<double>(num_subjects)));
    train_subjects = std::clamp<std::size_t>(train_subjects, 1, num_subjects - 1);

    auto make_split = [&](std::size_t first, std::size_t count) {
        Dataset d;
        d.shape_dims = shape_dims;
        const auto n = static_cast<Eigen::Index>(count * images_per_subject);
        d.features.resize(n, feature_dim);
        d.targets.resize(n, out_dim);
        Eigen::Index row = 0;
        for (std::size_t s = first; s < first + count; ++s)
        {
            char id[32];
            std::snprintf(id, sizeof id, "s%05zu", s);
            Eigen::VectorXd gamma(out_dim);
            for (Eigen::Index k = 0; k < out_dim; ++k)
                gamma(k) = sigmas(k) * normal(rng);
            const Eigen::VectorXd clean = task.mixing * gamma;

            std::vector<pooling::WeightedEstimate> per_image;
            for (std::size_t j = 0; j < images_per_subject; ++j)
            {
                Eigen::VectorXd x = clean;
                if (noise_sigma > 0.0)
                    for (Eigen::Index k = 0; k < feature_dim; ++k)
                        x(k) += noise_sigma * normal(rng);
                d.features.row(row + static_cast<Eigen::Index>(j)) = x.transpose();
                per_image.push_back({ParamVector::from_concatenated(gamma, shape_dims), 1.0});
            }
            const Eigen::VectorXd target = pooling::pool(per_image).concatenated();
            for (std::size_t j = 0; j < images_per_subject; ++j)
            {
                d.targets.row(row) = target.transpose();
                d.subject_ids.emplace_back(id);
                ++row;
            }
        }
        return d;
    };
    task.train = make_split(0, train_subjects);
    task.val = make_split(train_subjects, num_subjects - train_subjects);
    return task;
}

void write_dataset(const Dataset& data, const std::filesystem::path& features_csv,
                   const std::filesystem::path& targets_csv)
{
    data.validate();
    io::CsvTable f;
    f.header = {"subject_id"};
    for (Eigen::Index k = 0; k < data.features.cols(); ++k)
        f.header.push_back("f" + std::to_string(k));
    io::CsvTable t;
    t.header = {"subject_id"};
    for (Eigen::Index k = 0; k < data.targets.cols(); ++k)
        t.header.push_back("p" + std::to_string(k));

    std::map<std::string, bool> seen;
    for (Eigen::Index i = 0; i < data.size(); ++i)
    {
        const auto& id = data.subject_ids[static_cast<std::size_t>(i)];
        std::vector<std::string> row{id};
        for (Eigen::Index k = 0; k < data.features.cols(); ++k)
            row.push_back(io::format_double(data.features(i, k)));
        f.rows.push_back(std::move(row));
        if (!seen.emplace(id, true).second)
            continue;
        std::vector<std::string> trow{id};
        for (Eigen::Index k = 0; k < data.targets.cols(); ++k)
            trow.push_back(io::format_double(data.targets(i, k)));
        t.rows.push_back(std::move(trow));
    }
    io::write_csv(features_csv, f);
    io::write_csv(targets_csv, t);
}

Dataset read_features(const std::filesystem::path& features_csv)
{
    const io::CsvTable f = io::read_csv(features_csv);
    if (f.header.size() < 2)
        throw std::runtime_error("'" + features_csv.string() + "': expected subject_id followed by feature columns");
    Dataset d;
    const auto dims = static_cast<Eigen::Index>(f.header.size() - 1);
    d.features.resize(static_cast<Eigen::Index>(f.rows.size()), dims);
    for (std::size_t r = 0; r < f.rows.size(); ++r)
    {
        d.subject_ids.push_back(f.rows[r][0]);
        const std::string where = features_csv.filename().string() + " row " + std::to_string(r + 1);
        for (Eigen::Index k = 0; k < dims; ++k)
            d.features(static_cast<Eigen::Index>(r), k) =
                io::parse_double(f.rows[r][static_cast<std::size_t>(k + 1)], where);
    }
    return d;
}

Dataset read_dataset(const std::filesystem::path& features_csv, const std::filesystem::path& targets_csv,
                     Eigen::Index shape_dims)
{
    Dataset d = read_features(features_csv);
    const io::CsvTable t = io::read_csv(targets_csv);
    if (t.header.size() < 2)
        throw std::runtime_error("'" + targets_csv.string() + "': expected subject_id followed by parameter columns");
    const auto out_dim = static_cast<Eigen::Index>(t.header.size() - 1);
    std::map<std::string, Eigen::VectorXd> by_subject;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
    {
        Eigen::VectorXd g(out_dim);
        const std::string where = targets_csv.filename().string() + " row " + std::to_string(r + 1);
        for (Eigen::Index k = 0; k < out_dim; ++k)
            g(k) = io::parse_double(t.rows[r][static_cast<std::size_t>(k + 1)], where);
        if (!by_subject.emplace(t.rows[r][0], std::move(g)).second)
            throw std::runtime_error("'" + targets_csv.string() + "': duplicate subject '" + t.rows[r][0] + "'");
    }
    d.shape_dims = shape_dims;
    d.targets.resize(d.size(), out_dim);
    for (Eigen::Index i = 0; i < d.size(); ++i)
    {
        const auto& id = d.subject_ids[static_cast<std::size_t>(i)];
        const auto it = by_subject.find(id);
        if (it == by_subject.end())
            throw std::runtime_error("'" + targets_csv.string() + "': no target for subject '" + id + "'");
        d.targets.row(i) = it->second.transpose();
    }
    d.validate();
    return d;
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path)
{
    io::CsvTable t;
    t.header = {"epoch", "lr", "train_loss", "val_loss"};
    for (const auto& e : log.epochs)
        t.rows.push_back({std::to_string(e.epoch), io::format_double(e.lr), io::format_double(e.train_loss),
                          io::format_double(e.val_loss)});
    io::write_csv(path, t);
}

void save_checkpoint(const LinearRegressor& reg, const std::filesystem::path& path)
{
    io::Container c;
    c.header["format"] = "cnn3dmm-checkpoint";
    c.header["version"] = 1;
    c.header["kind"] = "linear";
    c.header["input_dim"] = reg.input_dim();
    c.header["output_dim"] = reg.output_dim();
    c.header["shape_dims"] = reg.shape_dims();
    const auto& p = reg.parameters();
    const Eigen::Index nw = reg.input_dim() * reg.output_dim();
    std::vector<float> w(static_cast<std::size_t>(nw)), b(static_cast<std::size_t>(reg.output_dim()));
    for (Eigen::Index i = 0; i < nw; ++i)
        w[static_cast<std::size_t>(i)] = static_cast<float>(p(i));
    for (Eigen::Index i = 0; i < reg.output_dim(); ++i)
        b[static_cast<std::size_t>(i)] = static_cast<float>(p(nw + i));
    c.add("weights", std::move(w));
    c.add("bias", std::move(b));
    io::write_container(path, "C3DR", c);
}

LinearRegressor load_checkpoint(const std::filesystem::path& path)
{
    const io::Container c = io::read_container(path, "C3DR");
    if (c.header.value("format", "") != "cnn3dmm-checkpoint" || c.header.value("version", 0) != 1 ||
        c.header.value("kind", "") != "linear")
        throw std::runtime_error("'" + path.string() + "': unsupported checkpoint format");
    LinearRegressor reg(c.header.at("input_dim").get<Eigen::Index>(), c.header.at("output_dim").get<Eigen::Index>(),
                        c.header.at("shape_dims").get<Eigen::Index>());
    const auto& w = c.f32("weights");
    const auto& b = c.f32("bias");
    const Eigen::Index nw = reg.input_dim() * reg.output_dim();
    if (static_cast<Eigen::Index>(w.size()) != nw || static_cast<Eigen::Index>(b.size()) != reg.output_dim())
        throw std::runtime_error("'" + path.string() + "': weight arrays do not match the declared dimensions");
    for (Eigen::Index i = 0; i < nw; ++i)
        reg.parameters()(i) = w[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i < reg.output_dim(); ++i)
        reg.parameters()(nw + i) = b[static_cast<std::size_t>(i)];
    return reg;
}

} // namespace cnn3dmm::regressor
