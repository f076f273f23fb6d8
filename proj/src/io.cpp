#include "pairdis/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pairdis/error.hpp"

namespace pairdis {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

void put(std::ostream& out, float f) {
  const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

}  // namespace

void write_f32_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) put(out, static_cast<float>(v));
}

void write_f32_le(std::ostream& out, std::span<const float> values) {
  for (float v : values) put(out, v);
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count, const std::string& what) {
  std::vector<std::uint32_t> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
  require(static_cast<std::size_t>(in.gcount()) == count * sizeof(std::uint32_t), ErrorKind::truncated_file,
          what + ": expected " + std::to_string(count) + " float32 values");
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(to_le(raw[i]));
  return out;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::config_error, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write " + path.string());
  out << value.dump(2) << '\n';
}

}  // namespace pairdis
