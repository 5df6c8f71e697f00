#include "seq2seq/toy/toy_sim.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "seq2seq/config.hpp"
#include "seq2seq/io/png_io.hpp"
#include "seq2seq/rng.hpp"
#include "seq2seq/toy/font.hpp"

namespace seq2seq::toy {

namespace fs = std::filesystem;

int ToyLayout::glyph_h() const { return kGlyphRows * glyph_scale; }
int ToyLayout::glyph_w() const { return kGlyphCols * glyph_scale; }

namespace {

// base gray level per structure and sequence; jitter keeps subjects from
// being exact palette copies. The two glyph slots share a level on purpose:
// intensity alone cannot tell which slot differs, only comparing the pair can
struct Palette {
  float background, circle, shared, diff;
};
constexpr Palette kBase[2] = {{0.05f, 0.45f, 0.95f, 0.95f}, {0.15f, 0.35f, 0.75f, 0.75f}};
constexpr float kJitter = 0.02f;

struct Box {
  int top, left, h, w;
};

bool overlaps(const Box& a, const Box& b, int margin) {
  return a.top < b.top + b.h + margin && b.top < a.top + a.h + margin &&
         a.left < b.left + b.w + margin && b.left < a.left + a.w + margin;
}

void render_circle(nn::Tensor<float>& img, int cy, int cx, int r, float intensity) {
  int h = img.dim(0), w = img.dim(1);
  for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y)
    for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x) {
      int dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx <= r * r)
        img.data[static_cast<std::size_t>(y) * w + x] = intensity;
    }
}

void render_image(nn::Tensor<float>& img, const ToyLayout& lay, int diff_label, int shared_label,
                  float bg, float circle, float shared, float diff) {
  std::fill(img.data.begin(), img.data.end(), bg);
  render_circle(img, lay.circle_cy, lay.circle_cx, lay.circle_r, circle);
  render_glyph(img, shared_label, lay.shared_top, lay.shared_left, lay.glyph_scale, shared);
  render_glyph(img, diff_label, lay.diff_top, lay.diff_left, lay.glyph_scale, diff);
}

}  // namespace

ToySubject generate_subject(std::uint64_t seed, int image_size) {
  if (image_size < 64) throw ConfigError("toy image size must be at least 64");
  Rng rng(seed);
  ToySubject s;
  ToyLayout& lay = s.layout;
  // structure sizes track the image so smaller desk-test canvases still fit
  lay.glyph_scale = std::max(2, image_size / 32);

  int margin = 4;
  lay.circle_r = rng.uniform_int(image_size * 11 / 100, image_size * 16 / 100);
  int gh = lay.glyph_h(), gw = lay.glyph_w();

  // circle box plus two glyph slots, rejection-sampled until disjoint
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 200) throw ShapeError("toy layout sampling failed to separate structures");
    lay.circle_cy = rng.uniform_int(margin + lay.circle_r, image_size - 1 - margin - lay.circle_r);
    lay.circle_cx = rng.uniform_int(margin + lay.circle_r, image_size - 1 - margin - lay.circle_r);
    lay.shared_top = rng.uniform_int(margin, image_size - margin - gh);
    lay.shared_left = rng.uniform_int(margin, image_size - margin - gw);
    lay.diff_top = rng.uniform_int(margin, image_size - margin - gh);
    lay.diff_left = rng.uniform_int(margin, image_size - margin - gw);
    Box cb{lay.circle_cy - lay.circle_r, lay.circle_cx - lay.circle_r, 2 * lay.circle_r + 1,
           2 * lay.circle_r + 1};
    Box sb{lay.shared_top, lay.shared_left, gh, gw};
    Box db{lay.diff_top, lay.diff_left, gh, gw};
    if (!overlaps(cb, sb, 2) && !overlaps(cb, db, 2) && !overlaps(sb, db, 2)) break;
  }

  s.shared_label = rng.uniform_int(26);
  s.label1 = rng.uniform_int(26);
  s.label2 = rng.uniform_int(25);
  if (s.label2 >= s.label1) ++s.label2;  // uniform over letters != label1

  for (int q = 0; q < 2; ++q) {
    float j0 = static_cast<float>(rng.uniform(-kJitter, kJitter));
    float j1 = static_cast<float>(rng.uniform(-kJitter, kJitter));
    float j2 = static_cast<float>(rng.uniform(-kJitter, kJitter));
    float j3 = static_cast<float>(rng.uniform(-kJitter, kJitter));
    s.intensities.background[static_cast<std::size_t>(q)] = kBase[q].background + j0;
    s.intensities.circle[static_cast<std::size_t>(q)] = kBase[q].circle + j1;
    s.intensities.shared[static_cast<std::size_t>(q)] = kBase[q].shared + j2;
    s.intensities.diff[static_cast<std::size_t>(q)] = kBase[q].diff + j3;
  }

  for (int q = 0; q < 2; ++q) {
    io::Volume& v = q == 0 ? s.x1 : s.x2;
    v.data = nn::Tensor<float>({image_size, image_size});
    render_image(v.data, lay, q == 0 ? s.label1 : s.label2, s.shared_label,
                 s.intensities.background[static_cast<std::size_t>(q)],
                 s.intensities.circle[static_cast<std::size_t>(q)],
                 s.intensities.shared[static_cast<std::size_t>(q)],
                 s.intensities.diff[static_cast<std::size_t>(q)]);
    v.range_min = 0.f;
    v.range_max = 1.f;
  }
  return s;
}

nn::Tensor<float> difference_mask(const ToySubject& s) {
  nn::Tensor<float> mask =
      nn::Tensor<float>::zeros({s.x1.data.dim(0), s.x1.data.dim(1)});
  glyph_coverage(mask, s.label1, s.layout.diff_top, s.layout.diff_left, s.layout.glyph_scale);
  glyph_coverage(mask, s.label2, s.layout.diff_top, s.layout.diff_left, s.layout.glyph_scale);
  return mask;
}

ToyManifest generate_dataset(const ToyGenConfig& cfg) {
  if (cfg.n <= 0) throw ConfigError("gen-toy: n must be positive");
  if (cfg.split[0] + cfg.split[1] + cfg.split[2] != cfg.n)
    throw ConfigError("gen-toy: split counts must sum to n");
  if (cfg.out_dir.empty()) throw ConfigError("gen-toy: output directory required");

  fs::create_directories(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "images");
  if (cfg.write_masks) fs::create_directories(fs::path(cfg.out_dir) / "masks");

  ToyManifest m;
  m.seed = cfg.seed;
  m.n = cfg.n;
  m.image_size = cfg.image_size;
  m.split_counts = cfg.split;

  Rng base(cfg.seed);
  for (int i = 0; i < cfg.n; ++i) {
    std::uint64_t sub_seed = base.fork(static_cast<std::uint64_t>(i) + 1).next_u64();
    ToySubject s = generate_subject(sub_seed, cfg.image_size);

    char id[16];
    std::snprintf(id, sizeof(id), "sub%05d", i);
    ToyManifestEntry e;
    e.id = id;
    e.split = i < cfg.split[0] ? "train" : (i < cfg.split[0] + cfg.split[1] ? "val" : "test");
    e.label1 = s.label1;
    e.label2 = s.label2;
    e.seed = sub_seed;
    e.x1_path = std::string("images/") + id + "_x1.png";
    e.x2_path = std::string("images/") + id + "_x2.png";
    io::save_png_gray(s.x1.data, (fs::path(cfg.out_dir) / e.x1_path).string());
    io::save_png_gray(s.x2.data, (fs::path(cfg.out_dir) / e.x2_path).string());
    if (cfg.write_masks)
      io::save_png_gray(difference_mask(s),
                        (fs::path(cfg.out_dir) / "masks" / (std::string(id) + ".png")).string());
    m.entries.push_back(std::move(e));
  }

  save_toy_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());
  return m;
}

void save_toy_manifest(const ToyManifest& m, const std::string& path) {
  Json j;
  j["seed"] = m.seed;
  j["n"] = m.n;
  j["image_size"] = m.image_size;
  j["split"] = {{"train", m.split_counts[0]}, {"val", m.split_counts[1]}, {"test", m.split_counts[2]}};
  Json subs = Json::array();
  for (const ToyManifestEntry& e : m.entries) {
    subs.push_back({{"id", e.id},
                    {"split", e.split},
                    {"label1", e.label1},
                    {"label2", e.label2},
                    {"seed", e.seed},
                    {"x1", e.x1_path},
                    {"x2", e.x2_path}});
  }
  j["subjects"] = std::move(subs);
  save_json_file(j, path);
}

ToyManifest load_toy_manifest(const std::string& path) {
  Json j = load_json_file(path);
  check_known_keys(j, {"seed", "n", "image_size", "split", "subjects"}, "toy manifest");
  ToyManifest m;
  m.seed = require<std::uint64_t>(j, "seed", "toy manifest");
  m.n = require<int>(j, "n", "toy manifest");
  m.image_size = get_or<int>(j, "image_size", 128);
  const Json& sp = j.at("split");
  m.split_counts = {require<int>(sp, "train", "toy manifest split"),
                    require<int>(sp, "val", "toy manifest split"),
                    require<int>(sp, "test", "toy manifest split")};
  for (const Json& e : j.at("subjects")) {
    check_known_keys(e, {"id", "split", "label1", "label2", "seed", "x1", "x2"},
                     "toy manifest subject");
    ToyManifestEntry ent;
    ent.id = require<std::string>(e, "id", "toy manifest subject");
    ent.split = require<std::string>(e, "split", "toy manifest subject");
    ent.label1 = require<int>(e, "label1", "toy manifest subject");
    ent.label2 = require<int>(e, "label2", "toy manifest subject");
    ent.seed = get_or<std::uint64_t>(e, "seed", 0);
    ent.x1_path = require<std::string>(e, "x1", "toy manifest subject");
    ent.x2_path = require<std::string>(e, "x2", "toy manifest subject");
    if (ent.label1 == ent.label2)
      throw DataError("toy manifest subject " + ent.id + " has equal labels");
    m.entries.push_back(std::move(ent));
  }
  if (static_cast<int>(m.entries.size()) != m.n)
    throw DataError("toy manifest subject count disagrees with n");
  return m;
}

}  // namespace seq2seq::toy
