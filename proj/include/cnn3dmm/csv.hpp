/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: include/cnn3dmm/csv.hpp
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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cnn3dmm::io {

// Plain comma-separated tables: no quoting, first line is the header.
struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Throws std::runtime_error on unreadable files or ragged rows.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string to_csv_string(const CsvTable& table);

/// Shortest representation that round-trips a double ("%.17g").
std::string format_double(double x);

/// Throws std::runtime_error naming `context` when the field is not a number.
double parse_double(std::string_view field, std::string_view context);

} // namespace cnn3dmm::io
