#include "pairdis/viz.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>

#include <Eigen/Dense>
#include <png.h>

#include "pairdis/error.hpp"

namespace pairdis {

namespace {

unsigned char to_byte(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(255.0 * c));
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write " + path.string());
  return out;
}

void write_coords(const std::filesystem::path& path, const Pca2& p, const std::vector<int>& labels) {
  auto out = open_out(path);
  out.precision(17);
  out << "id,class,pc1,pc2\n";
  for (std::size_t i = 0; i < p.coords.size(); ++i)
    out << i << ',' << labels[i] << ',' << p.coords[i][0] << ',' << p.coords[i][1] << '\n';
}

}  // namespace

std::string_view to_string(LatentPart p) noexcept { return p == LatentPart::common ? "common" : "specific"; }

LatentPart parse_latent_part(std::string_view name) {
  if (name == "common") return LatentPart::common;
  if (name == "specific") return LatentPart::specific;
  fail(ErrorKind::invalid_argument, "latent part must be common or specific, got '" + std::string(name) + "'");
}

std::vector<Image> interpolate(const Image& a, const Image& b, LatentPart which, std::size_t steps,
                               const ModelParams& params, const ModelConfig& cfg) {
  require(steps >= 2, ErrorKind::invalid_argument, "interpolation needs steps >= 2");
  const PosteriorPair pa = encode(a, params, cfg);
  const PosteriorPair pb = encode(b, params, cfg);
  std::vector<Image> frames;
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(steps - 1);
    std::vector<double> zc = pa.mu_c, zs = pa.mu_s;
    const std::vector<double>& from = which == LatentPart::common ? pa.mu_c : pa.mu_s;
    const std::vector<double>& to = which == LatentPart::common ? pb.mu_c : pb.mu_s;
    std::vector<double>& z = which == LatentPart::common ? zc : zs;
    if (k > 0)
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - alpha) * from[i] + alpha * to[i];
    frames.push_back(decode(zc, zs, params, cfg));
  }
  return frames;
}

Image interpolate_grid(const Image& a, const Image& b, LatentPart which, std::size_t steps, const ModelParams& params,
                       const ModelConfig& cfg) {
  return tile_row(interpolate(a, b, which, steps, params, cfg));
}

Image tile_row(const std::vector<Image>& frames) {
  require(!frames.empty(), ErrorKind::invalid_argument, "nothing to tile");
  const std::size_t h = frames[0].rows, w = frames[0].cols;
  Image out(h, w * frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    require(frames[f].rows == h && frames[f].cols == w, ErrorKind::shape_error, "frames differ in size");
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) out.at(r, f * w + c) = frames[f].at(r, c);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorKind::io_error, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io_error, "libpng initialisation failed");
  }
  std::vector<unsigned char> row(img.cols);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io_error, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols), static_cast<png_uint_32>(img.rows), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < img.rows; ++r) {
    for (std::size_t c = 0; c < img.cols; ++c) row[c] = to_byte(img.at(r, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  auto out = open_out(path, std::ios::binary);
  out << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  for (float v : img.pixels) out.put(static_cast<char>(to_byte(v)));
}

Pca2 pca_2d(const std::vector<std::vector<double>>& rows) {
  require(rows.size() >= 3, ErrorKind::invalid_argument,
          "projection needs at least 3 samples, got " + std::to_string(rows.size()));
  const std::size_t n = rows.size(), d = rows[0].size();
  require(d >= 2, ErrorKind::invalid_argument, "projection needs at least 2 feature dimensions");
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    require(rows[i].size() == d, ErrorKind::shape_error, "feature rows differ in length");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rows[i][j];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  require(es.info() == Eigen::Success, ErrorKind::invalid_argument, "eigendecomposition failed");
  // eigenvalues ascending
  Pca2 p;
  for (int k = 0; k < 2; ++k) {
    const Eigen::Index col = static_cast<Eigen::Index>(d) - 1 - k;
    Eigen::VectorXd v = es.eigenvectors().col(col);
    // sign convention: largest-magnitude entry positive
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.variance[static_cast<std::size_t>(k)] = es.eigenvalues()(col);
    p.axes[static_cast<std::size_t>(k)].assign(v.data(), v.data() + v.size());
    const Eigen::VectorXd proj = x * v;
    if (p.coords.empty()) p.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.coords[i][static_cast<std::size_t>(k)] = proj(static_cast<Eigen::Index>(i));
  }
  return p;
}

double centroid_probe_accuracy(const std::vector<std::array<double, 2>>& coords, const std::vector<int>& labels) {
  require(coords.size() == labels.size() && coords.size() >= 2, ErrorKind::invalid_argument,
          "probe needs matching coordinates and labels");
  std::map<int, std::array<double, 3>> acc;  // sum x, sum y, count
  for (std::size_t i = 0; i < coords.size(); i += 2) {
    auto& a = acc[labels[i]];
    a[0] += coords[i][0];
    a[1] += coords[i][1];
    a[2] += 1;
  }
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 1; i < coords.size(); i += 2) {
    int best = 0;
    double best_d = INFINITY;
    for (const auto& [label, a] : acc) {
      const double dx = coords[i][0] - a[0] / a[2], dy = coords[i][1] - a[1] / a[2];
      const double dist = dx * dx + dy * dy;
      if (dist < best_d) best_d = dist, best = label;
    }
    hit += best == labels[i];
    ++total;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

Projection project_features(const LabeledImageSet& set, const ModelParams& params, const ModelConfig& cfg,
                            const std::filesystem::path& out_dir) {
  require(set.size() >= 3, ErrorKind::invalid_argument,
          "projection needs at least 3 samples, got " + std::to_string(set.size()));
  Projection p;
  for (std::size_t i = 0; i < set.size(); i += 256) {
    std::vector<const Image*> chunk;
    for (std::size_t k = i; k < std::min(set.size(), i + 256); ++k) chunk.push_back(&set.images[k]);
    auto part = encode_batch(chunk, params, cfg);
    p.posts.insert(p.posts.end(), part.begin(), part.end());
  }
  std::vector<std::vector<double>> c, s;
  for (const auto& q : p.posts) {
    c.push_back(q.mu_c);
    s.push_back(q.mu_s);
  }
  p.common = pca_2d(c);
  p.specific = pca_2d(s);
  p.probe_common = centroid_probe_accuracy(p.common.coords, set.labels);
  p.probe_specific = centroid_probe_accuracy(p.specific.coords, set.labels);

  if (!out_dir.empty()) {
    auto out = open_out(out_dir / "features.csv");
    out.precision(17);
    out << "id,class";
    for (std::size_t k = 0; k < cfg.latent_common; ++k) out << ",mu_c" << k;
    for (std::size_t k = 0; k < cfg.latent_specific; ++k) out << ",mu_s" << k;
    out << '\n';
    for (std::size_t i = 0; i < p.posts.size(); ++i) {
      out << i << ',' << set.labels[i];
      for (double v : p.posts[i].mu_c) out << ',' << v;
      for (double v : p.posts[i].mu_s) out << ',' << v;
      out << '\n';
    }
    write_coords(out_dir / "pca_common.csv", p.common, set.labels);
    write_coords(out_dir / "pca_specific.csv", p.specific, set.labels);
  }
  return p;
}

}  // namespace pairdis
