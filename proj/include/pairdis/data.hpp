#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pairdis/random.hpp"

namespace pairdis {

// Grayscale image, row-major, values in [0,1].
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), pixels(r * c, fill) {}

  float at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
  float& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }

  friend bool operator==(const Image&, const Image&) = default;
};

enum class ImageSource { idx, synthetic };

struct LabeledImageSet {
  std::vector<Image> images;
  std::vector<int> labels;
  ImageSource source = ImageSource::synthetic;

  std::size_t size() const noexcept { return images.size(); }
};

enum class Variant { none, R, B, RB };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

struct ClutterSpec {
  std::size_t n_patches_min = 4;
  std::size_t n_patches_max = 8;
  std::size_t patch_size_min = 4;
  std::size_t patch_size_max = 12;
  double intensity_min = 0.0;
  double intensity_max = 1.0;
};

struct AugmentSpec {
  Variant variant = Variant::none;
  double rotation_min = 0.0;
  double rotation_max = 2.0 * std::numbers::pi;
  ClutterSpec clutter;
  std::uint64_t seed = 0;

  // Raises invalid-argument when an invariant is broken.
  void validate() const;
};

// Provenance of one pair; the label is recomputable as class_a != class_b.
struct PairMeta {
  int class_a = 0;
  int class_b = 0;
  std::size_t index_a = 0;
  std::size_t index_b = 0;
};

struct ImagePair {
  Image a;
  Image b;
};

struct PairDataset {
  std::vector<ImagePair> pairs;
  std::vector<int> labels;  // 1 = changed
  std::vector<PairMeta> meta;
  Variant variant = Variant::none;
  std::uint64_t seed = 0;
  std::string split = "train";

  std::size_t size() const noexcept { return pairs.size(); }
  std::size_t n_pos() const noexcept;
  std::size_t n_neg() const noexcept { return size() - n_pos(); }
};

// IDX (big-endian) MNIST ingestion. Raises magic-mismatch, truncated-file or
// count-mismatch.
LabeledImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
void write_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Procedural digit-like glyphs, 10 classes, exactly n/10 (+1 for the first
// n % 10 classes) per class. Deterministic for a fixed seed.
LabeledImageSet synth_glyphs(std::size_t n, std::uint64_t seed, std::size_t hw = 28);

// Looks for train/t10k IDX files under `dir`.
std::optional<LabeledImageSet> try_load_mnist(const std::filesystem::path& dir, bool train);

// Rotation (bilinear, zero fill, about the image centre) then clutter
// (uniform-noise rectangles composited by per-pixel max). Output in [0,1].
Image augment(const Image& img, const AugmentSpec& spec, Rng& rng);

// Pair plan without rendering: negatives first, then positives.
std::vector<PairMeta> plan_pairs(const std::vector<int>& labels, std::size_t n_neg, std::size_t n_pos,
                                 std::uint64_t seed);

PairDataset make_pairs(const LabeledImageSet& set, const AugmentSpec& spec, std::size_t n_neg, std::size_t n_pos,
                       std::uint64_t seed);

// Keeps every positive and a uniform random subset of n_pos negatives.
PairDataset undersample_negatives(const PairDataset& ds, std::uint64_t seed);

PairDataset negatives_only(const PairDataset& ds);
PairDataset select(const PairDataset& ds, const std::vector<std::size_t>& indices);

// Pairs whose label differs from (class_a != class_b) or whose negative uses
// one instance twice.
std::size_t count_label_violations(const PairDataset& ds);

// Binary: per pair, image A then image B as little-endian float32. Sidecar at
// `path`.json carries variant, counts, seed, split, labels, metadata and the
// sha256 of the binary.
void save_pairs(const PairDataset& ds, const std::filesystem::path& path);
PairDataset load_pairs(const std::filesystem::path& path);

// Where the images come from and how many pairs each split gets. Source
// "synthetic" renders glyphs; "mnist" reads IDX files from mnist_dir; "auto"
// tries mnist_dir and falls back to glyphs.
struct DataConfig {
  std::string source = "synthetic";
  std::string mnist_dir;
  std::size_t n_train_images = 6000;
  std::size_t n_test_images = 2000;
  Variant variant = Variant::R;
  std::uint64_t seed = 0;
  std::size_t n_pretrain_neg = 10000;
  std::size_t n_finetune_pos = 50;
  std::size_t n_test_neg = 1000;
  std::size_t n_test_pos = 1000;
  double rotation_min = 0.0;
  double rotation_max = 2.0 * std::numbers::pi;
  ClutterSpec clutter;

  void validate() const;
};

nlohmann::json to_json(const DataConfig& cfg);
DataConfig data_config_from_json(const nlohmann::json& j, const std::string& path = "data");

// Train or test image pool for the configured source. MNIST pools are capped
// at n_train_images / n_test_images.
LabeledImageSet source_images(const DataConfig& cfg, bool train);
AugmentSpec augment_spec(const DataConfig& cfg, std::uint64_t seed);

}  // namespace pairdis
