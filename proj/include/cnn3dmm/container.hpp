/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/container.hpp
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

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cnn3dmm::io {

/**
 * Binary container shared by model files and regressor checkpoints.
 *
 * Layout on disk:
 *
 *     magic        4 bytes ("C3DM" for models, "C3DR" for checkpoints)
 *     header_size  uint64, little-endian
 *     header       header_size bytes of UTF-8 JSON
 *     arrays       concatenated little-endian payloads, in the order listed
 *                  by header["arrays"] = [{"name", "dtype": "f32"|"u32", "count"}, ...]
 */
class Container
{
public:
    using Array = std::variant<std::vector<float>, std::vector<std::uint32_t>>;

    nlohmann::json header = nlohmann::json::object();

    void add(std::string name, std::vector<float> data);
    void add(std::string name, std::vector<std::uint32_t> data);

    /// Throws std::runtime_error if the array is missing or has a different dtype.
    const std::vector<float>& f32(std::string_view name) const;
    const std::vector<std::uint32_t>& u32(std::string_view name) const;

    const std::vector<std::pair<std::string, Array>>& arrays() const { return arrays_; }

private:
    std::vector<std::pair<std::string, Array>> arrays_;
};

void write_container(const std::filesystem::path& path, std::string_view magic, const Container& container);
Container read_container(const std::filesystem::path& path, std::string_view expected_magic);

} // namespace cnn3dmm::io
