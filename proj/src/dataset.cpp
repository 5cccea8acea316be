// Copyright 2026 The rsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rsnn/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace rsnn {
namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DatasetError("truncated header in " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  return in;
}

float segment_distance(float px, float py, float ax, float ay, float bx, float by) {
  const float vx = bx - ax, vy = by - ay;
  const float len2 = vx * vx + vy * vy;
  float t = len2 > 0.0f ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  const float dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Segments a..g of a seven-segment display over vertices
// 0:(L,T) 1:(R,T) 2:(L,M) 3:(R,M) 4:(L,B) 5:(R,B).
constexpr std::array<std::array<int, 2>, 7> kSegments = {{
    {0, 1},  // a
    {1, 3},  // b
    {3, 5},  // c
    {4, 5},  // d
    {2, 4},  // e
    {0, 2},  // f
    {2, 3},  // g
}};

constexpr std::array<const char*, 10> kDigits = {"abcdef", "bc",     "abged", "abgcd", "fgbc",
                                                 "afgcd",  "afgedc", "abc",   "abcdefg", "abcdfg"};

}  // namespace

Shape Dataset::sample_shape() const {
  Shape s = images.shape();
  if (!s.empty()) s.erase(s.begin());
  return s;
}

void Dataset::validate() const {
  if (images.ndim() < 2 || static_cast<std::size_t>(images.dim(0)) != labels.size()) {
    throw DatasetError("image count does not match label count");
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("pixel value outside [0,1]");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw DatasetError("label " + std::to_string(y) + " outside [0, classes)");
  }
}

Tensor Dataset::batch_images(std::span<const std::size_t> rows) const {
  return images.gather_rows(rows);
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels.at(r));
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset d;
  d.images = images.slice_rows(0, static_cast<int>(n));
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  d.classes = classes;
  return d;
}

Dataset make_blobs(std::uint64_t seed, std::size_t n, int classes, int dim, float spread) {
  Rng centers_rng = Rng(seed).fork(0);
  Rng rng = Rng(seed).fork(1);
  std::vector<float> centers(static_cast<std::size_t>(classes) * dim);
  for (float& c : centers) c = centers_rng.uniform(0.2f, 0.8f);
  Dataset d;
  d.classes = classes;
  d.images = Tensor({static_cast<int>(n), dim});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(classes));
    d.labels[i] = y;
    for (int j = 0; j < dim; ++j) {
      const float v = centers[static_cast<std::size_t>(y) * dim + j] + spread * rng.normal();
      d.images[i * dim + j] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return d;
}

Dataset make_glyphs(std::uint64_t seed, std::size_t n) {
  constexpr int kSide = 16;
  Rng rng(seed, 0x61797068);
  Dataset d;
  d.classes = 10;
  d.images = Tensor({static_cast<int>(n), 1, kSide, kSide});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.uniform_index(10));
    d.labels[i] = y;
    const float shear = rng.uniform(-0.15f, 0.15f);
    const float sx = rng.uniform(-1.5f, 1.5f), sy = rng.uniform(-1.5f, 1.5f);
    const float width = rng.uniform(0.8f, 1.3f);
    const float ink = rng.uniform(0.75f, 1.0f);
    std::array<float, 6> vx{}, vy{};
    for (int v = 0; v < 6; ++v) {
      const float bx = (v % 2 == 0) ? 4.5f : 10.5f;
      const float by = v < 2 ? 2.5f : (v < 4 ? 7.5f : 12.5f);
      const float jy = by + 0.5f * rng.normal() + sy;
      vx[v] = bx + 0.5f * rng.normal() + sx + shear * (jy - 7.5f);
      vy[v] = jy;
    }
    float* img = d.images.ptr() + i * kSide * kSide;
    for (int py = 0; py < kSide; ++py) {
      for (int px = 0; px < kSide; ++px) {
        float best = 1e9f;
        for (const char* s = kDigits[static_cast<std::size_t>(y)]; *s; ++s) {
          const auto& seg = kSegments[static_cast<std::size_t>(*s - 'a')];
          best = std::min(best, segment_distance(px + 0.5f, py + 0.5f, vx[seg[0]], vy[seg[0]],
                                                 vx[seg[1]], vy[seg[1]]));
        }
        const float stroke = ink * std::clamp(1.0f - (best - 0.5f * width), 0.0f, 1.0f);
        const float noise = rng.uniform(0.0f, 0.15f) + 0.05f * rng.normal();
        img[py * kSide + px] = std::clamp(stroke + noise, 0.0f, 1.0f);
      }
    }
  }
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int classes) {
  std::ifstream img = open_in(images);
  if (read_be32(img, images.string()) != 0x00000803u) {
    throw DatasetError(images.string() + " is not an IDX image file (magic 0x00000803)");
  }
  const std::uint32_t count = read_be32(img, images.string());
  const std::uint32_t rows = read_be32(img, images.string());
  const std::uint32_t cols = read_be32(img, images.string());
  std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * rows * cols);
  if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
    throw DatasetError("truncated pixel data in " + images.string());
  }
  std::ifstream lbl = open_in(labels);
  if (read_be32(lbl, labels.string()) != 0x00000801u) {
    throw DatasetError(labels.string() + " is not an IDX label file (magic 0x00000801)");
  }
  const std::uint32_t lcount = read_be32(lbl, labels.string());
  if (lcount != count) throw DatasetError("IDX image/label counts differ");
  std::vector<unsigned char> raw(lcount);
  if (!lbl.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DatasetError("truncated label data in " + labels.string());
  }
  Dataset d;
  d.classes = classes;
  d.images = Tensor({static_cast<int>(count), 1, static_cast<int>(rows), static_cast<int>(cols)});
  for (std::size_t i = 0; i < pixels.size(); ++i) d.images[i] = static_cast<float>(pixels[i]) / 255.0f;
  d.labels.assign(raw.begin(), raw.end());
  d.validate();
  return d;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  const Shape s = ds.sample_shape();
  if (!(s.size() == 3 && s[0] == 1) && s.size() != 2) {
    throw DatasetError("IDX export needs single-channel images");
  }
  const int rows = s[s.size() - 2], cols = s[s.size() - 1];
  std::ofstream img(images, std::ios::binary);
  write_be32(img, 0x00000803u);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (float v : ds.images.data()) {
    const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    img.put(static_cast<char>(b));
  }
  std::ofstream lbl(labels, std::ios::binary);
  write_be32(lbl, 0x00000801u);
  write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lbl.put(static_cast<char>(y));
  if (!img || !lbl) throw DatasetError("failed writing IDX files");
}

Dataset load_raw(const std::filesystem::path& manifest) {
  std::ifstream in = open_in(manifest);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const std::exception& e) {
    throw DatasetError("bad raw manifest " + manifest.string() + ": " + e.what());
  }
  if (m.value("format", "") != "rsnn-raw-v1") throw DatasetError("unsupported raw manifest format");
  const auto dir = manifest.parent_path();
  Shape shape = m.at("shape").get<Shape>();
  Dataset d;
  d.classes = m.at("classes").get<int>();
  d.images = Tensor(shape);
  std::ifstream img = open_in(dir / m.at("images").get<std::string>());
  static_assert(std::endian::native == std::endian::little, "raw blobs are little-endian");
  if (!img.read(reinterpret_cast<char*>(d.images.ptr()), static_cast<std::streamsize>(d.images.size() * 4))) {
    throw DatasetError("truncated raw image blob");
  }
  std::vector<std::int32_t> y(static_cast<std::size_t>(shape.at(0)));
  std::ifstream lbl = open_in(dir / m.at("labels").get<std::string>());
  if (!lbl.read(reinterpret_cast<char*>(y.data()), static_cast<std::streamsize>(y.size() * 4))) {
    throw DatasetError("truncated raw label blob");
  }
  d.labels.assign(y.begin(), y.end());
  d.validate();
  return d;
}

void save_raw(const Dataset& ds, const std::filesystem::path& manifest) {
  const auto stem = manifest.stem().string();
  const auto dir = manifest.parent_path();
  nlohmann::json m = {{"format", "rsnn-raw-v1"},
                      {"shape", ds.images.shape()},
                      {"classes", ds.classes},
                      {"images", stem + ".images.f32"},
                      {"labels", stem + ".labels.i32"}};
  std::ofstream(manifest) << m.dump(2) << '\n';
  std::ofstream img(dir / (stem + ".images.f32"), std::ios::binary);
  img.write(reinterpret_cast<const char*>(ds.images.ptr()), static_cast<std::streamsize>(ds.images.size() * 4));
  std::vector<std::int32_t> y(ds.labels.begin(), ds.labels.end());
  std::ofstream lbl(dir / (stem + ".labels.i32"), std::ios::binary);
  lbl.write(reinterpret_cast<const char*>(y.data()), static_cast<std::streamsize>(y.size() * 4));
  if (!img || !lbl) throw DatasetError("failed writing raw container");
}

}  // namespace rsnn
