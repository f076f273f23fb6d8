#include "pairdis/checkpoint.hpp"

#include <fstream>

#include "pairdis/error.hpp"
#include "pairdis/hash.hpp"
#include "pairdis/io.hpp"

namespace pairdis {

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".json";
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors, const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json shapes = nlohmann::json::array();
  {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io_error, "cannot write " + path.string());
    for (const auto& [name, t] : tensors) {
      names.push_back(name);
      shapes.push_back(t.shape());
      write_f32_le(out, t.data());
    }
  }
  nlohmann::json manifest = {
      {"format", "pairdis-checkpoint-v1"},
      {"names", names},
      {"shapes", shapes},
      {"config_hash", meta.config_hash},
      {"seeds", meta.seeds},
      {"step", meta.step},
      {"sha256", sha256_file(path)},
      {"extra", meta.extra},
  };
  write_json_file(manifest_path(path), manifest);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json manifest = read_json_file(manifest_path(path));
  Checkpoint ck;
  ck.meta.config_hash = manifest.value("config_hash", "");
  ck.meta.seeds = manifest.value("seeds", std::vector<std::uint64_t>{});
  ck.meta.step = manifest.value("step", std::int64_t{0});
  ck.meta.extra = manifest.value("extra", nlohmann::json::object());

  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open " + path.string());
  const auto& names = manifest.at("names");
  const auto& shapes = manifest.at("shapes");
  require(names.size() == shapes.size(), ErrorKind::count_mismatch, "checkpoint manifest names/shapes differ in length");
  for (std::size_t i = 0; i < names.size(); ++i) {
    Shape shape = shapes[i].get<Shape>();
    const std::string name = names[i].get<std::string>();
    std::vector<float> raw = read_f32_le(in, shape_numel(shape), "checkpoint tensor " + name);
    ck.tensors.emplace(name, Tensor(std::move(shape), std::vector<double>(raw.begin(), raw.end())));
  }
  in.peek();
  require(in.eof(), ErrorKind::count_mismatch, "checkpoint " + path.string() + " has trailing bytes");
  return ck;
}

}  // namespace pairdis
