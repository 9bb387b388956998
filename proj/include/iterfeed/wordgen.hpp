/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ITERFEED_WORDGEN_HPP_
#define ITERFEED_WORDGEN_HPP_

// Deterministic synthetic word-image rendering and train/test split
// construction. Glyphs are procedural stroke polylines (no font files), with
// deliberately shared stroke prefixes between visually confusable pairs
// (h/n, h/b, c/e, i/l, ...) so recognition errors concentrate on those
// substitutions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterfeed/charset.hpp"
#include "iterfeed/common.hpp"
#include "iterfeed/rng.hpp"
#include "iterfeed/tensor.hpp"

namespace iterfeed {

inline constexpr int kImageHeight = 32;
inline constexpr int kImageWidth = 100;
inline constexpr int kMaxLabelLen = 12;
inline constexpr int kMinGlyphAdvance = 8;

struct StyleConfig {
  double jitter = 0.6;        // per-point positional noise, pixels
  double noise_sigma = 0.06;  // additive pixel noise
  double contrast_lo = 0.65;  // ink intensity range
  double contrast_hi = 1.0;
  double bg_max = 0.10;       // background level drawn from [0, bg_max]
  double thickness = 1.0;     // pen radius, pixels
  double advance = 9.0;       // horizontal pixels per character

  friend void to_json(nlohmann::json& j, const StyleConfig& s) {
    j = {{"jitter", s.jitter},         {"noise_sigma", s.noise_sigma},
         {"contrast_lo", s.contrast_lo}, {"contrast_hi", s.contrast_hi},
         {"bg_max", s.bg_max},         {"thickness", s.thickness},
         {"advance", s.advance}};
  }
  friend void from_json(const nlohmann::json& j, StyleConfig& s) {
    s.jitter = j.value("jitter", s.jitter);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.contrast_lo = j.value("contrast_lo", s.contrast_lo);
    s.contrast_hi = j.value("contrast_hi", s.contrast_hi);
    s.bg_max = j.value("bg_max", s.bg_max);
    s.thickness = j.value("thickness", s.thickness);
    s.advance = j.value("advance", s.advance);
  }
};

struct WordImageSample {
  Tensor<float> image;  // (32, 100, 1), values k/255
  CharSequence label;
  std::uint64_t style_seed = 0;
  std::string id;
};

enum class SplitMode { kConventional, kDisjoint };

inline const char* split_mode_name(SplitMode m) {
  return m == SplitMode::kConventional ? "cs" : "ds";
}
inline SplitMode split_mode_from_name(const std::string& s) {
  if (s == "cs") return SplitMode::kConventional;
  if (s == "ds") return SplitMode::kDisjoint;
  throw UsageError("unknown split mode: " + s + " (expected cs|ds)");
}

struct DatasetSplit {
  std::vector<WordImageSample> train;
  std::vector<WordImageSample> test;
  SplitMode mode = SplitMode::kConventional;
  std::uint64_t seed = 0;
  int instances_per_word = 1;
};

// ---- glyph library ----------------------------------------------------------

namespace glyphs {

using Point = std::pair<double, double>;
using Stroke = std::vector<Point>;  // polyline in glyph-local coordinates

// Coordinates: x in [0,1] across the glyph box; y = 0 at x-height, 1 at the
// baseline, negative toward the ascender, > 1 into the descender.
inline Stroke seg(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y1}};
}

// Elliptical arc sampled as a polyline; angle 0 points right, 90 points down.
inline Stroke arc(double cx, double cy, double rx, double ry, double a0,
                  double a1, int n = 20) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    double a = (a0 + (a1 - a0) * i / n) * M_PI / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

inline const std::map<char, std::vector<Stroke>>& table() {
  static const std::map<char, std::vector<Stroke>> t = [] {
    std::map<char, std::vector<Stroke>> g;
    g['a'] = {arc(0.45, 0.52, 0.34, 0.44, 0, 360), seg(0.80, 0.05, 0.80, 1.0)};
    g['b'] = {seg(0.15, -0.55, 0.15, 1.0), arc(0.52, 0.52, 0.36, 0.44, 0, 360)};
    g['c'] = {arc(0.52, 0.52, 0.38, 0.46, 40, 320)};
    g['d'] = {arc(0.48, 0.52, 0.36, 0.44, 0, 360), seg(0.85, -0.55, 0.85, 1.0)};
    g['e'] = {arc(0.52, 0.52, 0.38, 0.46, 40, 320), seg(0.14, 0.48, 0.88, 0.48)};
    g['f'] = {{{0.85, -0.48}, {0.65, -0.55}, {0.55, -0.35}, {0.55, 1.0}},
              seg(0.25, 0.02, 0.85, 0.02)};
    g['g'] = {arc(0.46, 0.5, 0.34, 0.43, 0, 360), seg(0.81, 0.05, 0.81, 1.28),
              {{0.81, 1.28}, {0.68, 1.48}, {0.34, 1.46}, {0.2, 1.3}}};
    g['h'] = {seg(0.15, -0.55, 0.15, 1.0), arc(0.5, 0.55, 0.35, 0.44, 180, 360),
              seg(0.85, 0.55, 0.85, 1.0)};
    g['i'] = {seg(0.5, 0.05, 0.5, 1.0), arc(0.5, -0.3, 0.05, 0.05, 0, 360, 8)};
    g['j'] = {seg(0.55, 0.05, 0.55, 1.28),
              {{0.55, 1.28}, {0.45, 1.47}, {0.2, 1.4}},
              arc(0.55, -0.3, 0.05, 0.05, 0, 360, 8)};
    g['k'] = {seg(0.15, -0.55, 0.15, 1.0), seg(0.8, 0.05, 0.18, 0.55),
              seg(0.35, 0.42, 0.85, 1.0)};
    g['l'] = {seg(0.5, -0.55, 0.5, 1.0)};
    g['m'] = {seg(0.12, 0.05, 0.12, 1.0), arc(0.31, 0.5, 0.19, 0.4, 180, 360),
              seg(0.5, 0.5, 0.5, 1.0), arc(0.69, 0.5, 0.19, 0.4, 180, 360),
              seg(0.88, 0.5, 0.88, 1.0)};
    g['n'] = {seg(0.15, 0.05, 0.15, 1.0), arc(0.5, 0.55, 0.35, 0.44, 180, 360),
              seg(0.85, 0.55, 0.85, 1.0)};
    g['o'] = {arc(0.5, 0.52, 0.37, 0.45, 0, 360)};
    g['p'] = {seg(0.15, 0.05, 0.15, 1.5), arc(0.52, 0.52, 0.36, 0.44, 0, 360)};
    g['q'] = {arc(0.48, 0.52, 0.36, 0.44, 0, 360), seg(0.85, 0.05, 0.85, 1.5)};
    g['r'] = {seg(0.15, 0.05, 0.15, 1.0), arc(0.5, 0.52, 0.35, 0.44, 180, 310)};
    g['s'] = {{{0.82, 0.12},
               {0.5, 0.02},
               {0.2, 0.16},
               {0.22, 0.42},
               {0.5, 0.52},
               {0.78, 0.62},
               {0.8, 0.88},
               {0.5, 0.98},
               {0.18, 0.88}}};
    g['t'] = {seg(0.5, -0.35, 0.5, 0.9), {{0.5, 0.9}, {0.62, 1.0}, {0.82, 0.95}},
              seg(0.2, 0.02, 0.8, 0.02)};
    g['u'] = {seg(0.15, 0.05, 0.15, 0.58), arc(0.5, 0.55, 0.35, 0.43, 0, 180),
              seg(0.85, 0.05, 0.85, 1.0)};
    g['v'] = {{{0.1, 0.05}, {0.5, 1.0}, {0.9, 0.05}}};
    g['w'] = {{{0.06, 0.05}, {0.28, 1.0}, {0.5, 0.25}, {0.72, 1.0}, {0.94, 0.05}}};
    g['x'] = {seg(0.12, 0.05, 0.88, 1.0), seg(0.88, 0.05, 0.12, 1.0)};
    g['y'] = {seg(0.15, 0.05, 0.52, 0.9),
              {{0.85, 0.05}, {0.4, 1.5}, {0.15, 1.4}}};
    g['z'] = {{{0.15, 0.05}, {0.85, 0.05}, {0.15, 0.95}, {0.85, 0.95}}};
    return g;
  }();
  return t;
}

// Letters whose glyphs share stroke prefixes with at least one other letter.
inline const std::string& confusable_letters() {
  static const std::string s = "abcehilmnortuvw";
  return s;
}

}  // namespace glyphs

// ---- rendering ---------------------------------------------------------------

namespace detail {

inline void stamp_stroke(std::vector<double>& canvas, const glyphs::Stroke& pts,
                         double thickness) {
  double sigma = 0.55 * thickness;
  int reach = static_cast<int>(std::ceil(2.2 * sigma));
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double x0 = pts[i].first, y0 = pts[i].second;
    double x1 = pts[i + 1].first, y1 = pts[i + 1].second;
    double len = std::hypot(x1 - x0, y1 - y0);
    int steps = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
    for (int s = 0; s <= steps; ++s) {
      double u = static_cast<double>(s) / steps;
      double px = x0 + u * (x1 - x0);
      double py = y0 + u * (y1 - y0);
      int cy = static_cast<int>(std::lround(py));
      int cx = static_cast<int>(std::lround(px));
      for (int dy = -reach; dy <= reach; ++dy) {
        int yy = cy + dy;
        if (yy < 0 || yy >= kImageHeight) continue;
        for (int dx = -reach; dx <= reach; ++dx) {
          int xx = cx + dx;
          if (xx < 0 || xx >= kImageWidth) continue;
          double d2 = (yy - py) * (yy - py) + (xx - px) * (xx - px);
          double v = std::exp(-d2 / (2.0 * sigma * sigma));
          double& cell = canvas[static_cast<std::size_t>(yy) * kImageWidth + xx];
          if (v > cell) cell = v;
        }
      }
    }
  }
}

inline std::uint64_t label_hash(const CharSequence& label) {
  return fnv1a(label.data(), label.size() * sizeof(int));
}

}  // namespace detail

// Pure function of (word, style, seed): renders a 32x100 grayscale image with
// values quantized to the 8-bit grid so on-disk round-trips are exact.
inline WordImageSample render_word(const CharSequence& word,
                                   const Charset& charset,
                                   const StyleConfig& style,
                                   std::uint64_t seed) {
  if (word.empty()) throw DataError("render_word: empty word");
  for (int tok : word)
    if (!charset.is_symbol(tok))
      throw DataError("render_word: token " + std::to_string(tok) +
                      " outside charset");
  double advance = std::max<double>(style.advance, kMinGlyphAdvance);
  double margin = 2.0;
  if (margin * 2 + advance * static_cast<double>(word.size()) >
      kImageWidth + 1e-9) {
    std::size_t max_len = static_cast<std::size_t>(
        (kImageWidth - 2 * margin) / kMinGlyphAdvance);
    throw DataError("render_word: word \"" + charset.decode(word) +
                    "\" too long to fit " + std::to_string(kImageWidth) +
                    " px (max " + std::to_string(max_len) + " chars)");
  }
  for (int tok : word) {
    char c = charset.char_of(tok);
    if (!glyphs::table().count(c))
      throw DataError(std::string("render_word: no glyph for '") + c + "'");
  }

  Rng rng(mix_seed(seed, detail::label_hash(word)));
  double ink = rng.uniform(style.contrast_lo, style.contrast_hi);
  double bg = rng.uniform(0.0, style.bg_max);

  const double baseline = 24.5, xh = 11.0;
  std::vector<double> canvas(kImageHeight * kImageWidth, 0.0);
  for (std::size_t ci = 0; ci < word.size(); ++ci) {
    char c = charset.char_of(word[ci]);
    double x_off = margin + advance * static_cast<double>(ci) +
                   rng.normal(0.0, style.jitter * 0.4);
    double y_off = rng.normal(0.0, style.jitter * 0.4);
    double gw = advance * 0.82;
    for (const auto& stroke : glyphs::table().at(c)) {
      glyphs::Stroke placed;
      placed.reserve(stroke.size());
      for (const auto& [gx, gy] : stroke) {
        double px = x_off + gx * gw + rng.normal(0.0, style.jitter);
        double py = baseline + (gy - 1.0) * xh + y_off +
                    rng.normal(0.0, style.jitter);
        placed.push_back({px, py});
      }
      detail::stamp_stroke(canvas, placed, style.thickness);
    }
  }

  WordImageSample s;
  s.image = Tensor<float>(Shape{kImageHeight, kImageWidth, 1});
  s.label = word;
  s.style_seed = seed;
  for (int i = 0; i < kImageHeight * kImageWidth; ++i) {
    double v = bg * (1.0 - canvas[i]) + ink * canvas[i];
    if (style.noise_sigma > 0) v += rng.normal(0.0, style.noise_sigma);
    v = std::min(1.0, std::max(0.0, v));
    int q = static_cast<int>(std::lround(v * 255.0));
    s.image[i] = static_cast<float>(q) / 255.0f;
  }
  return s;
}

// ---- splits ------------------------------------------------------------------

inline std::vector<CharSequence> unique_words(
    const std::vector<CharSequence>& vocab) {
  std::vector<CharSequence> out;
  std::set<CharSequence> seen;
  for (const auto& w : vocab)
    if (seen.insert(w).second) out.push_back(w);
  return out;
}

inline DatasetSplit build_split(const std::vector<CharSequence>& vocab,
                                const Charset& charset, SplitMode mode,
                                double train_fraction, int instances_per_word,
                                std::uint64_t seed,
                                const StyleConfig& style = StyleConfig{}) {
  if (vocab.empty()) throw DataError("build_split: empty vocab");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw UsageError("build_split: train_fraction must be in (0,1)");
  if (instances_per_word < 1)
    throw UsageError("build_split: instances_per_word must be >= 1");
  std::vector<CharSequence> words = unique_words(vocab);
  if (mode == SplitMode::kDisjoint && words.size() < 2)
    throw DataError("build_split: DS mode needs >= 2 unique words, got " +
                    std::to_string(words.size()));

  auto render_instance = [&](const CharSequence& w, int inst) {
    std::uint64_t s =
        mix_seed(seed, detail::label_hash(w), static_cast<std::uint64_t>(inst));
    WordImageSample sample = render_word(w, charset, style, s);
    sample.id = charset.decode(w) + "_" + std::to_string(inst);
    return sample;
  };

  DatasetSplit split;
  split.mode = mode;
  split.seed = seed;
  split.instances_per_word = instances_per_word;

  if (mode == SplitMode::kDisjoint) {
    Rng rng(mix_seed(seed, 0xD150));
    rng.shuffle(words);
    auto n_train = static_cast<std::size_t>(
        std::lround(train_fraction * static_cast<double>(words.size())));
    n_train = std::min(std::max<std::size_t>(n_train, 1), words.size() - 1);
    for (std::size_t i = 0; i < words.size(); ++i) {
      auto& dst = i < n_train ? split.train : split.test;
      for (int k = 0; k < instances_per_word; ++k)
        dst.push_back(render_instance(words[i], k));
    }
  } else {
    std::vector<WordImageSample> all;
    for (const auto& w : words)
      for (int k = 0; k < instances_per_word; ++k)
        all.push_back(render_instance(w, k));
    Rng rng(mix_seed(seed, 0xC5));
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    auto n_train = static_cast<std::size_t>(
        std::lround(train_fraction * static_cast<double>(all.size())));
    n_train = std::min(std::max<std::size_t>(n_train, 1), all.size() - 1);
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& dst = i < n_train ? split.train : split.test;
      dst.push_back(std::move(all[order[i]]));
    }
  }
  return split;
}

inline std::set<CharSequence> label_set(
    const std::vector<WordImageSample>& samples) {
  std::set<CharSequence> out;
  for (const auto& s : samples) out.insert(s.label);
  return out;
}

// ---- persistence ---------------------------------------------------------------

namespace detail {

inline void write_pgm(const std::filesystem::path& path,
                      const Tensor<float>& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write image file " + path.string());
  f << "P5\n" << kImageWidth << " " << kImageHeight << "\n255\n";
  for (std::int64_t i = 0; i < img.size(); ++i) {
    auto b = static_cast<unsigned char>(std::lround(img[i] * 255.0f));
    f.put(static_cast<char>(b));
  }
}

inline Tensor<float> read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read image file " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255)
    throw DataError("unsupported image format in " + path.string());
  if (w != kImageWidth || h != kImageHeight)
    throw DataError("image " + path.string() + " has size " +
                    std::to_string(w) + "x" + std::to_string(h) +
                    ", expected 100x32");
  f.get();  // single whitespace after header
  Tensor<float> img(Shape{kImageHeight, kImageWidth, 1});
  for (std::int64_t i = 0; i < img.size(); ++i) {
    int b = f.get();
    if (b == EOF) throw DataError("truncated image file " + path.string());
    img[i] = static_cast<float>(b) / 255.0f;
  }
  return img;
}

}  // namespace detail

inline void save_dataset(const DatasetSplit& split,
                         const std::filesystem::path& dir,
                         const Charset& charset) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  std::ofstream mf(dir / "manifest.jsonl");
  if (!mf) throw DataError("cannot write manifest in " + dir.string());
  nlohmann::json header = {{"format", "iterfeed-dataset"},
                           {"version", 1},
                           {"mode", split_mode_name(split.mode)},
                           {"seed", split.seed},
                           {"instances_per_word", split.instances_per_word},
                           {"charset", charset.symbols()}};
  mf << header.dump() << "\n";
  auto dump_side = [&](const std::vector<WordImageSample>& side,
                       const char* name) {
    for (const auto& s : side) {
      std::string rel = "images/" + s.id + ".pgm";
      detail::write_pgm(dir / rel, s.image);
      nlohmann::json rec = {{"id", s.id},
                            {"label", charset.decode(s.label)},
                            {"seed", s.style_seed},
                            {"image_path", rel},
                            {"split", name}};
      mf << rec.dump() << "\n";
    }
  };
  dump_side(split.train, "train");
  dump_side(split.test, "test");
}

inline DatasetSplit load_dataset(const std::filesystem::path& dir,
                                 Charset* charset_out = nullptr) {
  namespace fs = std::filesystem;
  std::ifstream mf(dir / "manifest.jsonl");
  if (!mf)
    throw DataError("cannot open manifest " + (dir / "manifest.jsonl").string());
  std::string line;
  int line_no = 0;
  DatasetSplit split;
  Charset charset;
  while (std::getline(mf, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": parse error: " + e.what());
    }
    try {
      if (line_no == 1) {
        if (j.value("format", "") != "iterfeed-dataset")
          throw DataError("manifest line 1: not an iterfeed dataset manifest");
        split.mode = split_mode_from_name(j.at("mode").get<std::string>());
        split.seed = j.at("seed").get<std::uint64_t>();
        split.instances_per_word = j.value("instances_per_word", 1);
        charset = Charset(j.value("charset", charset.symbols()));
        continue;
      }
      WordImageSample s;
      s.id = j.at("id").get<std::string>();
      s.label = charset.encode(j.at("label").get<std::string>());
      s.style_seed = j.at("seed").get<std::uint64_t>();
      std::string rel = j.at("image_path").get<std::string>();
      fs::path img = dir / rel;
      if (!fs::exists(img))
        throw DataError("dataset sample \"" + s.id + "\": missing image file " +
                        img.string());
      s.image = detail::read_pgm(img);
      std::string side = j.at("split").get<std::string>();
      if (side == "train")
        split.train.push_back(std::move(s));
      else if (side == "test")
        split.test.push_back(std::move(s));
      else
        throw DataError("unknown split tag \"" + side + "\"");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": missing/invalid field: " + e.what());
    }
  }
  if (line_no == 0) throw DataError("manifest is empty");
  if (charset_out) *charset_out = charset;
  return split;
}

// ---- vocab helpers -------------------------------------------------------------

inline std::vector<CharSequence> load_vocab(const std::filesystem::path& path,
                                            const Charset& charset) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open vocab file " + path.string());
  std::vector<CharSequence> out;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty()) continue;
    out.push_back(charset.encode(line));
  }
  return out;
}

inline void save_vocab(const std::vector<CharSequence>& vocab,
                       const Charset& charset,
                       const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write vocab file " + path.string());
  for (const auto& w : vocab) f << charset.decode(w) << "\n";
}

// Random unique pseudowords over the confusable-letter subset; useful for
// building toy corpora where substitution errors are systematic.
inline std::vector<CharSequence> confusable_vocab(int n_words, int len_lo,
                                                  int len_hi,
                                                  const Charset& charset,
                                                  std::uint64_t seed) {
  if (n_words < 1 || len_lo < 1 || len_hi < len_lo || len_hi > kMaxLabelLen)
    throw UsageError("confusable_vocab: bad arguments");
  const std::string& letters = glyphs::confusable_letters();
  Rng rng(mix_seed(seed, 0xF0CA));
  std::set<CharSequence> seen;
  std::vector<CharSequence> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < n_words) {
    if (++guard > n_words * 1000)
      throw DataError("confusable_vocab: vocabulary space exhausted");
    int len = len_lo + static_cast<int>(rng.below(
                            static_cast<std::uint64_t>(len_hi - len_lo + 1)));
    CharSequence w;
    for (int i = 0; i < len; ++i)
      w.push_back(charset.token_of(
          letters[static_cast<std::size_t>(rng.below(letters.size()))]));
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace iterfeed

#endif  // ITERFEED_WORDGEN_HPP_
