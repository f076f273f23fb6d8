#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace pairdis {

// Little-endian float32 streams, independent of host byte order.
void write_f32_le(std::ostream& out, std::span<const double> values);
void write_f32_le(std::ostream& out, std::span<const float> values);
// Reads exactly `count` values or raises truncated-file.
std::vector<float> read_f32_le(std::istream& in, std::size_t count, const std::string& what);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace pairdis
