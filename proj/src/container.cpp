/*
 * cnn3dmm - regressed 3D morphable face models: synthesis, pooling, training and evaluation.
 *
 * File: src/container.cpp
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
#include "cnn3dmm/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cnn3dmm::io {

namespace {

void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | p[i];
    return v;
}

} // namespace

void Container::add(std::string name, std::vector<float> data)
{
    arrays_.emplace_back(std::move(name), std::move(data));
}

void Container::add(std::string name, std::vector<std::uint32_t> data)
{
    arrays_.emplace_back(std::move(name), std::move(data));
}

const std::vector<float>& Container::f32(std::string_view name) const
{
    for (const auto& [n, a] : arrays_)
    {
        if (n != name)
            continue;
        if (const auto* v = std::get_if<std::vector<float>>(&a))
            return *v;
        throw std::runtime_error("container array '" + std::string(name) + "' is not f32");
    }
    throw std::runtime_error("container has no array '" + std::string(name) + "'");
}

const std::vector<std::uint32_t>& Container::u32(std::string_view name) const
{
    for (const auto& [n, a] : arrays_)
    {
        if (n != name)
            continue;
        if (const auto* v = std::get_if<std::vector<std::uint32_t>>(&a))
            return *v;
        throw std::runtime_error("container array '" + std::string(name) + "' is not u32");
    }
    throw std::runtime_error("container has no array '" + std::string(name) + "'");
}

void write_container(const std::filesystem::path& path, std::string_view magic, const Container& container)
{
    if (magic.size() != 4)
        throw std::invalid_argument("container magic must be 4 bytes");

    nlohmann::json header = container.header;
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& [name, array] : container.arrays())
    {
        const bool is_f32 = std::holds_alternative<std::vector<float>>(array);
        const std::size_t count = is_f32 ? std::get<std::vector<float>>(array).size()
                                         : std::get<std::vector<std::uint32_t>>(array).size();
        layout.push_back({{"name", name}, {"dtype", is_f32 ? "f32" : "u32"}, {"count", count}});
    }
    header["arrays"] = layout;
    const std::string header_text = header.dump();

    std::string bytes(magic);
    put_u64(bytes, header_text.size());
    bytes += header_text;
    for (const auto& [name, array] : container.arrays())
    {
        if (const auto* f = std::get_if<std::vector<float>>(&array))
        {
            for (float x : *f)
                put_u32(bytes, std::bit_cast<std::uint32_t>(x));
        } else
        {
            for (std::uint32_t x : std::get<std::vector<std::uint32_t>>(array))
                put_u32(bytes, x);
        }
    }

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("failed writing '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, std::string_view expected_magic)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());

    if (bytes.size() < 12 || bytes.compare(0, 4, expected_magic) != 0)
        throw std::runtime_error("'" + path.string() + "' is not a " + std::string(expected_magic) + " container");
    const std::uint64_t header_size = get_u64(data + 4);
    if (header_size > bytes.size() - 12)
        throw std::runtime_error("'" + path.string() + "': truncated header");

    Container container;
    try
    {
        container.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<long>(header_size));
    } catch (const nlohmann::json::exception& e)
    {
        throw std::runtime_error("'" + path.string() + "': bad JSON header: " + e.what());
    }

    std::size_t offset = 12 + header_size;
    for (const auto& entry : container.header.at("arrays"))
    {
        const auto name = entry.at("name").get<std::string>();
        const auto dtype = entry.at("dtype").get<std::string>();
        const auto count = entry.at("count").get<std::size_t>();
        if (count > (bytes.size() - offset) / 4)
            throw std::runtime_error("'" + path.string() + "': truncated array '" + name + "'");
        if (dtype == "f32")
        {
            std::vector<float> v(count);
            for (std::size_t i = 0; i < count; ++i)
                v[i] = std::bit_cast<float>(get_u32(data + offset + 4 * i));
            container.add(name, std::move(v));
        } else if (dtype == "u32")
        {
            std::vector<std::uint32_t> v(count);
            for (std::size_t i = 0; i < count; ++i)
                v[i] = get_u32(data + offset + 4 * i);
            container.add(name, std::move(v));
        } else
        {
            throw std::runtime_error("'" + path.string() + "': unknown dtype '" + dtype + "'");
        }
        offset += 4 * count;
    }
    if (offset != bytes.size())
        throw std::runtime_error("'" + path.string() + "': trailing bytes after last array");
    container.header.erase("arrays");
    return container;
}

} // namespace cnn3dmm::io
