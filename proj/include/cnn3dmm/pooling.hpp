/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/pooling.hpp
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
#pragma once

#include "cnn3dmm/model.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cnn3dmm::pooling {

/// One per-image estimate together with its (unnormalised) confidence.
struct WeightedEstimate
{
    ParamVector gamma;
    double weight = 1.0;
};

enum class ItemKind
{
    still_image,
    video
};

std::string to_string(ItemKind kind);
/// Accepts "still", "still_image", "image" and "video". Throws std::invalid_argument otherwise.
ItemKind parse_item_kind(std::string_view text);

/// A still image (one estimate) or a video (one estimate per frame).
struct TemplateItem
{
    ItemKind kind = ItemKind::still_image;
    std::vector<WeightedEstimate> estimates;
};

/**
 * Confidence-weighted average of the estimates. Weights are normalised internally,
 * so raw detector confidences can be passed directly.
 *
 * The mean is accumulated incrementally (m += w_i / W_i * (g_i - m)), which keeps
 * identical inputs and zero-weight entries exact. Entries are visited in a canonical
 * order, so any permutation of the list gives a bit-identical result.
 *
 * Throws std::invalid_argument for an empty list, negative or non-finite weights,
 * all-zero weights or mismatched dimensions.
 */
ParamVector pool(std::span<const WeightedEstimate> estimates);

/**
 * Two-stage template pooling: every video is first reduced to the equal-weight mean
 * of its frames, then all items (reduced videos and stills) are averaged with equal
 * weights. Per-estimate confidences are not used here.
 */
ParamVector pool_template(std::span<const TemplateItem> items);

/// One row of an estimate list file.
struct EstimateRow
{
    std::string subject_id;
    std::string item_id;
    ItemKind kind = ItemKind::still_image;
    double weight = 1.0;
    ParamVector gamma;
};

/**
 * Estimate list CSV: subject_id,item_id,kind,weight followed by the parameter
 * columns (shape coefficients first). The number of parameter columns is taken
 * from the header; `shape_dims` splits them into alpha and beta.
 */
std::vector<EstimateRow> read_estimates(const std::filesystem::path& path, Eigen::Index shape_dims);
void write_estimates(const std::filesystem::path& path, std::span<const EstimateRow> rows);

/**
 * Groups rows into templates keyed by subject_id. Video rows sharing an item_id
 * become the frames of one video item; every still row is its own item. Items keep
 * their file order.
 */
std::map<std::string, std::vector<TemplateItem>> group_templates(std::span<const EstimateRow> rows);

enum class PoolMode
{
    weighted,  ///< flat confidence-weighted pooling of all rows of a subject
    template_  ///< two-stage equal-weight template pooling
};

std::map<std::string, ParamVector> pool_by_subject(std::span<const EstimateRow> rows, PoolMode mode);

/// Pooled output CSV: subject_id followed by parameter columns p0..p{D-1}.
void write_pooled(const std::filesystem::path& path, const std::map<std::string, ParamVector>& pooled);
/// Reads the same layout (any id column name); throws on duplicate ids.
std::map<std::string, ParamVector> read_pooled(const std::filesystem::path& path, Eigen::Index shape_dims);

} // namespace cnn3dmm::pooling
