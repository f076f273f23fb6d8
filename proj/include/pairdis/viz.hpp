#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

#include "pairdis/data.hpp"
#include "pairdis/model.hpp"

namespace pairdis {

enum class LatentPart { common, specific };
std::string_view to_string(LatentPart p) noexcept;
LatentPart parse_latent_part(std::string_view name);

// Decodes (1 - alpha) mu_A + alpha mu_B for the chosen part with the other
// part held at image A's mean, alpha = 0, 1/(steps-1), ..., 1. No sampling.
std::vector<Image> interpolate(const Image& a, const Image& b, LatentPart which, std::size_t steps,
                               const ModelParams& params, const ModelConfig& cfg);
// The frames tiled left to right into one image.
Image interpolate_grid(const Image& a, const Image& b, LatentPart which, std::size_t steps, const ModelParams& params,
                       const ModelConfig& cfg);
Image tile_row(const std::vector<Image>& frames);

// 8-bit grayscale, value = round(255 * pixel).
void write_png(const std::filesystem::path& path, const Image& img);
void write_pgm(const std::filesystem::path& path, const Image& img);

struct Pca2 {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> variance{};  // eigenvalues, descending
  std::array<std::vector<double>, 2> axes;
};
// Mean-centred projection on the two leading eigenvectors of the covariance.
// Needs at least 3 rows.
Pca2 pca_2d(const std::vector<std::vector<double>>& rows);

// Nearest-centroid classification accuracy: centroids fitted on the even
// rows, scored on the odd rows.
double centroid_probe_accuracy(const std::vector<std::array<double, 2>>& coords, const std::vector<int>& labels);

struct Projection {
  std::vector<PosteriorPair> posts;
  Pca2 common, specific;
  double probe_common = 0, probe_specific = 0;
};

// Encodes every image; when `out_dir` is non-empty writes features.csv
// (id, class, mu_c..., mu_s...), pca_common.csv and pca_specific.csv.
Projection project_features(const LabeledImageSet& set, const ModelParams& params, const ModelConfig& cfg,
                            const std::filesystem::path& out_dir = {});

}  // namespace pairdis
