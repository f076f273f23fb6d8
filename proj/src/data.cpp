#include "pairdis/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pairdis/config.hpp"
#include "pairdis/error.hpp"
#include "pairdis/hash.hpp"
#include "pairdis/io.hpp"

namespace pairdis {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  require(in.gcount() == 4, ErrorKind::truncated_file, what + ": header truncated");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                 static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(in.gcount()) == n, ErrorKind::truncated_file,
          what + ": expected " + std::to_string(n) + " payload bytes, got " + std::to_string(in.gcount()));
  return buf;
}

// --- procedural glyphs ----------------------------------------------------

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

Stroke arc(double cx, double cy, double rx, double ry, double deg0, double deg1) {
  Stroke s;
  const int n = std::max(4, static_cast<int>(std::abs(deg1 - deg0) / 12.0));
  for (int i = 0; i <= n; ++i) {
    const double a = (deg0 + (deg1 - deg0) * i / n) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

// Unit-square templates (y grows downward), one stroke list per class.
std::vector<Stroke> glyph_template(int cls) {
  switch (cls) {
    case 0: return {arc(0.5, 0.5, 0.17, 0.28, 0, 360)};
    case 1: return {{{0.42, 0.30}, {0.52, 0.22}, {0.52, 0.78}}};
    case 2: {
      Stroke s = arc(0.5, 0.36, 0.16, 0.14, 200, 380);
      s.push_back({0.32, 0.78});
      s.push_back({0.70, 0.78});
      return {s};
    }
    case 3: return {arc(0.49, 0.355, 0.15, 0.13, 200, 450), arc(0.49, 0.625, 0.16, 0.15, 270, 520)};
    case 4: return {{{0.60, 0.78}, {0.60, 0.22}, {0.30, 0.62}, {0.72, 0.62}}};
    case 5: return {{{0.68, 0.22}, {0.38, 0.22}, {0.36, 0.47}}, arc(0.5, 0.62, 0.17, 0.16, 220, 500)};
    case 6: return {{{0.63, 0.22}, {0.45, 0.38}, {0.36, 0.60}}, arc(0.5, 0.63, 0.15, 0.15, 0, 360)};
    case 7: return {{{0.32, 0.22}, {0.70, 0.22}, {0.46, 0.78}}};
    case 8: return {arc(0.5, 0.35, 0.13, 0.13, 0, 360), arc(0.5, 0.645, 0.155, 0.155, 0, 360)};
    case 9: return {arc(0.5, 0.37, 0.15, 0.15, 0, 360), {{0.65, 0.37}, {0.62, 0.58}, {0.56, 0.78}}};
    default: fail(ErrorKind::invalid_argument, "glyph class out of range");
  }
}

double seg_dist(Pt p, Pt a, Pt b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

Image render_glyph(int cls, std::size_t hw, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double sx = 1.0 + 0.10 * u(rng), sy = 1.0 + 0.10 * u(rng);
  const double scale = 0.95 + 0.1 * u(rng);
  const double shear = 0.25 * u(rng);
  const double tx = 0.05 * u(rng), ty = 0.05 * u(rng);
  const double half_width = 1.4 + 0.4 * u(rng);
  const double size = static_cast<double>(hw);

  std::vector<std::pair<Pt, Pt>> segments;
  for (Stroke s : glyph_template(cls)) {
    for (Pt& p : s) {
      const double jx = p.x + 0.015 * u(rng) - 0.5, jy = p.y + 0.015 * u(rng) - 0.5;
      const double x = scale * sx * (jx - shear * jy) + 0.5 + tx;
      const double y = scale * sy * jy + 0.5 + ty;
      p = {x * size, y * size};
    }
    for (std::size_t i = 1; i < s.size(); ++i) segments.emplace_back(s[i - 1], s[i]);
  }

  Image img(hw, hw);
  for (std::size_t r = 0; r < hw; ++r) {
    for (std::size_t c = 0; c < hw; ++c) {
      const Pt p{c + 0.5, r + 0.5};
      double d = 1e9;
      for (const auto& [a, b] : segments) d = std::min(d, seg_dist(p, a, b));
      img.at(r, c) = static_cast<float>(std::clamp(half_width + 0.5 - d, 0.0, 1.0));
    }
  }
  return img;
}

Image rotate_bilinear(const Image& img, double angle) {
  Image out(img.rows, img.cols);
  const double cy = (static_cast<double>(img.rows) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.cols) - 1.0) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  auto sample = [&](long r, long c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<long>(img.rows) || c >= static_cast<long>(img.cols)) return 0.0;
    return img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  for (std::size_t r = 0; r < img.rows; ++r) {
    for (std::size_t c = 0; c < img.cols; ++c) {
      // Inverse map of the output pixel into the source frame.
      const double dx = c - cx, dy = r - cy;
      const double sx = ca * dx + sa * dy + cx;
      const double sy = -sa * dx + ca * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double v = (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                       wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
      out.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::none: return "none";
    case Variant::R: return "R";
    case Variant::B: return "B";
    case Variant::RB: return "RB";
  }
  return "none";
}

Variant parse_variant(std::string_view name) {
  if (name == "none") return Variant::none;
  if (name == "R") return Variant::R;
  if (name == "B") return Variant::B;
  if (name == "RB" || name == "R-B") return Variant::RB;
  fail(ErrorKind::invalid_argument, "unknown variant '" + std::string(name) + "' (expected none, R, B, RB)");
}

void AugmentSpec::validate() const {
  const double two_pi = 2.0 * std::numbers::pi;
  require(rotation_min <= rotation_max && rotation_min >= 0.0 && rotation_max <= two_pi, ErrorKind::invalid_argument,
          "rotation range must be ordered and within [0, 2pi]");
  if (variant == Variant::B || variant == Variant::RB) {
    require(clutter.n_patches_min >= 1 && clutter.n_patches_min <= clutter.n_patches_max, ErrorKind::invalid_argument,
            "clutter variants need 1 <= n_patches_min <= n_patches_max");
    require(clutter.patch_size_min >= 1 && clutter.patch_size_min <= clutter.patch_size_max,
            ErrorKind::invalid_argument, "clutter patch size range must be ordered and positive");
    require(clutter.intensity_min >= 0.0 && clutter.intensity_min <= clutter.intensity_max &&
                clutter.intensity_max <= 1.0,
            ErrorKind::invalid_argument, "clutter intensity range must be ordered within [0,1]");
  }
}

std::size_t PairDataset::n_pos() const noexcept {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

LabeledImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  std::ifstream im(images_path, std::ios::binary);
  require(static_cast<bool>(im), ErrorKind::io_error, "cannot open " + images_path.string());
  std::ifstream lb(labels_path, std::ios::binary);
  require(static_cast<bool>(lb), ErrorKind::io_error, "cannot open " + labels_path.string());

  const std::uint32_t im_magic = read_be32(im, images_path.string());
  require(im_magic == kImagesMagic, ErrorKind::magic_mismatch,
          images_path.string() + ": magic " + std::to_string(im_magic) + ", expected 2051 (0x00000803)");
  const std::uint32_t lb_magic = read_be32(lb, labels_path.string());
  require(lb_magic == kLabelsMagic, ErrorKind::magic_mismatch,
          labels_path.string() + ": magic " + std::to_string(lb_magic) + ", expected 2049 (0x00000801)");

  const std::uint32_t n = read_be32(im, images_path.string());
  const std::uint32_t rows = read_be32(im, images_path.string());
  const std::uint32_t cols = read_be32(im, images_path.string());
  const std::uint32_t n_labels = read_be32(lb, labels_path.string());
  require(n == n_labels, ErrorKind::count_mismatch,
          "image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));

  const std::vector<unsigned char> pix = read_bytes(im, std::size_t{n} * rows * cols, images_path.string());
  const std::vector<unsigned char> lab = read_bytes(lb, n, labels_path.string());

  LabeledImageSet set;
  set.source = ImageSource::idx;
  set.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Image img(rows, cols);
    for (std::size_t p = 0; p < std::size_t{rows} * cols; ++p) img.pixels[p] = pix[i * rows * cols + p] / 255.0f;
    set.images.push_back(std::move(img));
    set.labels.push_back(lab[i]);
  }
  return set;
}

void write_idx(const LabeledImageSet& set, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  require(set.images.size() == set.labels.size(), ErrorKind::count_mismatch, "write_idx: images/labels differ");
  const std::size_t rows = set.images.empty() ? 0 : set.images[0].rows;
  const std::size_t cols = set.images.empty() ? 0 : set.images[0].cols;
  std::ofstream im(images_path, std::ios::binary);
  std::ofstream lb(labels_path, std::ios::binary);
  require(im && lb, ErrorKind::io_error, "cannot write IDX files");
  write_be32(im, kImagesMagic);
  write_be32(im, static_cast<std::uint32_t>(set.images.size()));
  write_be32(im, static_cast<std::uint32_t>(rows));
  write_be32(im, static_cast<std::uint32_t>(cols));
  write_be32(lb, kLabelsMagic);
  write_be32(lb, static_cast<std::uint32_t>(set.labels.size()));
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    for (float v : set.images[i].pixels) {
      im.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    lb.put(static_cast<char>(set.labels[i]));
  }
}

LabeledImageSet synth_glyphs(std::size_t n, std::uint64_t seed, std::size_t hw) {
  require(n >= 10, ErrorKind::invalid_argument, "synth_glyphs needs n >= 10, got " + std::to_string(n));
  require(hw >= 8, ErrorKind::invalid_argument, "synth_glyphs needs images of at least 8x8");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 10);
  Rng order(derive_seed(seed, 0xC1A55));
  std::shuffle(labels.begin(), labels.end(), order);

  LabeledImageSet set;
  set.source = ImageSource::synthetic;
  set.labels = labels;
  set.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    set.images.push_back(render_glyph(labels[i], hw, rng));
  }
  return set;
}

std::optional<LabeledImageSet> try_load_mnist(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  const auto images = dir / (prefix + "-images-idx3-ubyte");
  const auto labels = dir / (prefix + "-labels-idx1-ubyte");
  if (!std::filesystem::exists(images) || !std::filesystem::exists(labels)) return std::nullopt;
  return load_idx(images, labels);
}

Image augment(const Image& img, const AugmentSpec& spec, Rng& rng) {
  Image out = img;
  if (spec.variant == Variant::R || spec.variant == Variant::RB) {
    const double angle = uniform(rng, spec.rotation_min, spec.rotation_max);
    if (angle != 0.0) out = rotate_bilinear(out, angle);
  }
  if (spec.variant == Variant::B || spec.variant == Variant::RB) {
    const ClutterSpec& cl = spec.clutter;
    const std::size_t n = uniform_index(rng, cl.n_patches_min, cl.n_patches_max);
    Image clutter(out.rows, out.cols);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t h = std::min(uniform_index(rng, cl.patch_size_min, cl.patch_size_max), out.rows);
      const std::size_t w = std::min(uniform_index(rng, cl.patch_size_min, cl.patch_size_max), out.cols);
      const std::size_t r0 = uniform_index(rng, 0, out.rows - h);
      const std::size_t c0 = uniform_index(rng, 0, out.cols - w);
      for (std::size_t r = r0; r < r0 + h; ++r)
        for (std::size_t c = c0; c < c0 + w; ++c)
          clutter.at(r, c) =
              std::max(clutter.at(r, c), static_cast<float>(uniform(rng, cl.intensity_min, cl.intensity_max)));
    }
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = std::max(out.pixels[i], clutter.pixels[i]);
  }
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::vector<PairMeta> plan_pairs(const std::vector<int>& labels, std::size_t n_neg, std::size_t n_pos,
                                 std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0, ErrorKind::invalid_argument, "negative class label");
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= by_class.size()) by_class.resize(c + 1);
    by_class[c].push_back(i);
  }
  std::vector<int> classes;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    classes.push_back(static_cast<int>(c));
    require(n_neg == 0 || by_class[c].size() >= 2, ErrorKind::unsatisfiable_request,
            "class " + std::to_string(c) + " has fewer than 2 instances; negatives need two distinct instances");
  }
  require(n_neg == 0 || !classes.empty(), ErrorKind::unsatisfiable_request, "no classes available for negatives");
  require(n_pos == 0 || classes.size() >= 2, ErrorKind::unsatisfiable_request, "positives need at least 2 classes");

  std::vector<PairMeta> plan;
  plan.reserve(n_neg + n_pos);
  for (std::size_t i = 0; i < n_neg + n_pos; ++i) {
    Rng rng(derive_seed(seed, i));
    PairMeta m;
    if (i < n_neg) {
      const int c = classes[uniform_index(rng, 0, classes.size() - 1)];
      const auto& pool = by_class[static_cast<std::size_t>(c)];
      const std::size_t a = uniform_index(rng, 0, pool.size() - 1);
      std::size_t b = uniform_index(rng, 0, pool.size() - 2);
      if (b >= a) ++b;
      m = {c, c, pool[a], pool[b]};
    } else {
      const std::size_t ka = uniform_index(rng, 0, classes.size() - 1);
      std::size_t kb = uniform_index(rng, 0, classes.size() - 2);
      if (kb >= ka) ++kb;
      const auto& pa = by_class[static_cast<std::size_t>(classes[ka])];
      const auto& pb = by_class[static_cast<std::size_t>(classes[kb])];
      m = {classes[ka], classes[kb], pa[uniform_index(rng, 0, pa.size() - 1)], pb[uniform_index(rng, 0, pb.size() - 1)]};
    }
    plan.push_back(m);
  }
  return plan;
}

PairDataset make_pairs(const LabeledImageSet& set, const AugmentSpec& spec, std::size_t n_neg, std::size_t n_pos,
                       std::uint64_t seed) {
  spec.validate();
  require(set.images.size() == set.labels.size(), ErrorKind::count_mismatch, "image set labels/images differ");
  PairDataset ds;
  ds.variant = spec.variant;
  ds.seed = seed;
  ds.meta = plan_pairs(set.labels, n_neg, n_pos, seed);
  ds.pairs.reserve(ds.meta.size());
  ds.labels.reserve(ds.meta.size());
  const std::uint64_t aug_master = derive_seed(seed, spec.seed ^ 0xA06A06ULL);
  for (std::size_t i = 0; i < ds.meta.size(); ++i) {
    const PairMeta& m = ds.meta[i];
    Rng ra(derive_seed(aug_master, 2 * i));
    Rng rb(derive_seed(aug_master, 2 * i + 1));
    ds.pairs.push_back({augment(set.images[m.index_a], spec, ra), augment(set.images[m.index_b], spec, rb)});
    ds.labels.push_back(m.class_a != m.class_b ? 1 : 0);
  }
  return ds;
}

PairDataset select(const PairDataset& ds, const std::vector<std::size_t>& indices) {
  PairDataset out;
  out.variant = ds.variant;
  out.seed = ds.seed;
  out.split = ds.split;
  for (std::size_t i : indices) {
    require(i < ds.size(), ErrorKind::invalid_argument, "select: index out of range");
    out.pairs.push_back(ds.pairs[i]);
    out.labels.push_back(ds.labels[i]);
    out.meta.push_back(ds.meta[i]);
  }
  return out;
}

PairDataset undersample_negatives(const PairDataset& ds, std::uint64_t seed) {
  const std::size_t n_pos = ds.n_pos();
  require(n_pos >= 1, ErrorKind::invalid_argument, "undersample_negatives needs at least one positive");
  std::vector<std::size_t> neg, keep;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 1 ? keep : neg).push_back(i);
  const std::size_t take = std::min(n_pos, neg.size());
  Rng rng(seed);
  // Partial Fisher-Yates: the first `take` entries are a uniform subset.
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(neg[i], neg[uniform_index(rng, i, neg.size() - 1)]);
  }
  keep.insert(keep.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(keep.begin(), keep.end());
  return select(ds, keep);
}

PairDataset negatives_only(const PairDataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == 0) idx.push_back(i);
  return select(ds, idx);
}

std::size_t count_label_violations(const PairDataset& ds) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const PairMeta& m = ds.meta[i];
    const int expected = m.class_a != m.class_b ? 1 : 0;
    if (ds.labels[i] != expected || (expected == 0 && m.index_a == m.index_b)) ++bad;
  }
  return bad;
}

void save_pairs(const PairDataset& ds, const std::filesystem::path& path) {
  require(!ds.pairs.empty(), ErrorKind::invalid_argument, "save_pairs: empty dataset");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io_error, "cannot write " + path.string());
    for (const ImagePair& p : ds.pairs) {
      write_f32_le(out, std::span<const float>(p.a.pixels));
      write_f32_le(out, std::span<const float>(p.b.pixels));
    }
  }
  nlohmann::json meta = nlohmann::json::array();
  for (const PairMeta& m : ds.meta) meta.push_back({m.class_a, m.class_b, m.index_a, m.index_b});
  nlohmann::json side = {
      {"format", "pairdis-pairs-v1"},
      {"variant", std::string(to_string(ds.variant))},
      {"counts", {{"n_pos", ds.n_pos()}, {"n_neg", ds.n_neg()}}},
      {"seed", ds.seed},
      {"split", ds.split},
      {"rows", ds.pairs[0].a.rows},
      {"cols", ds.pairs[0].a.cols},
      {"n_pairs", ds.size()},
      {"labels", ds.labels},
      {"meta", meta},
      {"sha256", sha256_file(path)},
  };
  write_json_file(path.string() + ".json", side);
}

PairDataset load_pairs(const std::filesystem::path& path) {
  const nlohmann::json side = read_json_file(path.string() + ".json");
  const std::string digest = sha256_file(path);
  require(digest == side.at("sha256").get<std::string>(), ErrorKind::contract_violation,
          path.string() + ": sha256 does not match sidecar");
  PairDataset ds;
  ds.variant = parse_variant(side.at("variant").get<std::string>());
  ds.seed = side.at("seed").get<std::uint64_t>();
  ds.split = side.at("split").get<std::string>();
  ds.labels = side.at("labels").get<std::vector<int>>();
  const std::size_t rows = side.at("rows"), cols = side.at("cols"), n = side.at("n_pairs");
  require(ds.labels.size() == n && side.at("meta").size() == n, ErrorKind::count_mismatch,
          path.string() + ": sidecar counts disagree");
  for (const auto& m : side.at("meta")) {
    ds.meta.push_back({m[0].get<int>(), m[1].get<int>(), m[2].get<std::size_t>(), m[3].get<std::size_t>()});
  }
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open " + path.string());
  ds.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ImagePair p{Image(rows, cols), Image(rows, cols)};
    p.a.pixels = read_f32_le(in, rows * cols, path.string());
    p.b.pixels = read_f32_le(in, rows * cols, path.string());
    ds.pairs.push_back(std::move(p));
  }
  require(side.at("counts").at("n_pos").get<std::size_t>() == ds.n_pos(), ErrorKind::count_mismatch,
          path.string() + ": counts inconsistent with labels");
  return ds;
}

void DataConfig::validate() const {
  require(source == "synthetic" || source == "mnist" || source == "auto", ErrorKind::config_error,
          "data.source: expected synthetic, mnist or auto");
  require(source == "synthetic" || !mnist_dir.empty(), ErrorKind::config_error,
          "data.mnist_dir: required for source " + source);
  require(n_train_images >= 2 && n_test_images >= 2, ErrorKind::config_error, "data: image pools need >= 2 images");
  augment_spec(*this, 0).validate();
}

nlohmann::json to_json(const DataConfig& cfg) {
  return {{"source", cfg.source},
          {"mnist_dir", cfg.mnist_dir},
          {"n_train_images", cfg.n_train_images},
          {"n_test_images", cfg.n_test_images},
          {"variant", std::string(to_string(cfg.variant))},
          {"seed", cfg.seed},
          {"n_pretrain_neg", cfg.n_pretrain_neg},
          {"n_finetune_pos", cfg.n_finetune_pos},
          {"n_test_neg", cfg.n_test_neg},
          {"n_test_pos", cfg.n_test_pos},
          {"rotation_min", cfg.rotation_min},
          {"rotation_max", cfg.rotation_max},
          {"clutter",
           {{"n_patches_min", cfg.clutter.n_patches_min},
            {"n_patches_max", cfg.clutter.n_patches_max},
            {"patch_size_min", cfg.clutter.patch_size_min},
            {"patch_size_max", cfg.clutter.patch_size_max},
            {"intensity_min", cfg.clutter.intensity_min},
            {"intensity_max", cfg.clutter.intensity_max}}}};
}

DataConfig data_config_from_json(const nlohmann::json& j, const std::string& path) {
  const ConfigReader r(j, path);
  r.allow_only({"source", "mnist_dir", "n_train_images", "n_test_images", "variant", "seed", "n_pretrain_neg",
                "n_finetune_pos", "n_test_neg", "n_test_pos", "rotation_min", "rotation_max", "clutter"});
  DataConfig c;
  c.source = r.get("source", c.source);
  c.mnist_dir = r.get("mnist_dir", c.mnist_dir);
  c.n_train_images = r.get("n_train_images", c.n_train_images);
  c.n_test_images = r.get("n_test_images", c.n_test_images);
  if (r.has("variant")) {
    const auto name = r.get<std::string>("variant", "");
    try {
      c.variant = parse_variant(name);
    } catch (const Error& e) {
      fail(ErrorKind::config_error, r.key_path("variant") + ": " + e.what());
    }
  }
  c.seed = r.get("seed", c.seed);
  c.n_pretrain_neg = r.get("n_pretrain_neg", c.n_pretrain_neg);
  c.n_finetune_pos = r.get("n_finetune_pos", c.n_finetune_pos);
  c.n_test_neg = r.get("n_test_neg", c.n_test_neg);
  c.n_test_pos = r.get("n_test_pos", c.n_test_pos);
  c.rotation_min = r.get("rotation_min", c.rotation_min);
  c.rotation_max = r.get("rotation_max", c.rotation_max);
  const ConfigReader cl = r.child("clutter");
  cl.allow_only({"n_patches_min", "n_patches_max", "patch_size_min", "patch_size_max", "intensity_min",
                 "intensity_max"});
  c.clutter.n_patches_min = cl.get("n_patches_min", c.clutter.n_patches_min);
  c.clutter.n_patches_max = cl.get("n_patches_max", c.clutter.n_patches_max);
  c.clutter.patch_size_min = cl.get("patch_size_min", c.clutter.patch_size_min);
  c.clutter.patch_size_max = cl.get("patch_size_max", c.clutter.patch_size_max);
  c.clutter.intensity_min = cl.get("intensity_min", c.clutter.intensity_min);
  c.clutter.intensity_max = cl.get("intensity_max", c.clutter.intensity_max);
  try {
    c.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config_error) throw;
    fail(ErrorKind::config_error, path + ": " + e.what());
  }
  return c;
}

LabeledImageSet source_images(const DataConfig& cfg, bool train) {
  const std::size_t cap = train ? cfg.n_train_images : cfg.n_test_images;
  if (cfg.source != "synthetic") {
    auto set = try_load_mnist(cfg.mnist_dir, train);
    if (set) {
      if (set->size() > cap) {
        set->images.resize(cap);
        set->labels.resize(cap);
      }
      return *set;
    }
    require(cfg.source == "auto", ErrorKind::io_error, "no MNIST IDX files under " + cfg.mnist_dir);
  }
  return synth_glyphs(cap, derive_seed(cfg.seed, train ? 1 : 2));
}

AugmentSpec augment_spec(const DataConfig& cfg, std::uint64_t seed) {
  AugmentSpec s;
  s.variant = cfg.variant;
  s.rotation_min = cfg.rotation_min;
  s.rotation_max = cfg.rotation_max;
  s.clutter = cfg.clutter;
  s.seed = seed;
  return s;
}

}  // namespace pairdis
