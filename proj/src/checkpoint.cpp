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

#include "rsnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rsnn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'R', 'S', 'N', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

void put_name(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_shape(std::string& out, const Shape& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  for (int d : s) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string name() { return std::string(bytes(get<std::uint32_t>("name length"), "name")); }

  Shape shape() {
    const std::uint32_t nd = get<std::uint32_t>("rank");
    if (nd > 8) throw CheckpointError("implausible tensor rank " + std::to_string(nd));
    Shape s;
    for (std::uint32_t i = 0; i < nd; ++i) {
      const std::uint64_t d = get<std::uint64_t>("dimension");
      if (d > (1u << 30)) throw CheckpointError("implausible dimension");
      s.push_back(static_cast<int>(d));
    }
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

nlohmann::json layer_json(const LayerSpec& l) {
  return {{"kind", std::string(to_string(l.kind))}, {"out", l.out},       {"kernel", l.kernel},
          {"stride", l.stride},                     {"padding", l.padding}, {"bias", l.bias},
          {"eps", l.eps},                           {"momentum", l.momentum}};
}

LayerKind kind_from(const std::string& s) {
  for (LayerKind k : {LayerKind::conv, LayerKind::linear, LayerKind::batchnorm, LayerKind::relu, LayerKind::avgpool,
                      LayerKind::flatten}) {
    if (to_string(k) == s) return k;
  }
  throw CheckpointError("unknown layer kind '" + s + "'");
}

void check_consistency(const Model& m) {
  Rng rng(0);
  const ParamMap expected = init_parameters(m.spec, rng);
  for (const auto& [name, t] : expected) {
    const auto it = m.params.find(name);
    if (it == m.params.end()) throw CheckpointError("missing parameter " + name);
    if (it->second.shape() != t.shape()) throw CheckpointError("shape mismatch for " + name);
  }
  for (const auto& [name, t] : m.params) {
    if (!expected.contains(name) && !name.ends_with(".threshold")) {
      throw CheckpointError("unexpected parameter " + name);
    }
  }
  if (!m.mask) return;
  for (const auto& [name, l] : m.mask->layers) {
    const auto it = m.params.find(name);
    if (it == m.params.end() || it->second.shape() != l.shape) throw CheckpointError("mask does not match " + name);
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (!l.bits[i] && it->second[i] != 0.0f) throw CheckpointError("masked weight is nonzero in " + name);
    }
  }
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  nlohmann::json h;
  h["architecture"] = architecture_string(model.spec);
  h["input_shape"] = model.spec.input_shape;
  h["classes"] = model.spec.classes;
  h["layers"] = nlohmann::json::array();
  for (const LayerSpec& l : model.spec.layers) h["layers"].push_back(layer_json(l));
  h["metadata"] = model.metadata;
  if (model.mask) {
    h["mask"] = {{"kappa", model.mask->kappa}, {"granularity", std::string(to_string(model.mask->granularity))}};
  }
  const std::string header = h.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [name, t] : model.params) {
    put_name(out, name);
    put_shape(out, t.shape());
    out.append(reinterpret_cast<const char*>(t.ptr()), t.size() * sizeof(float));
  }
  const std::size_t masks = model.mask ? model.mask->layers.size() : 0;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(masks));
  if (model.mask) {
    for (const auto& [name, m] : model.mask->layers) {
      put_name(out, name);
      put_shape(out, m.shape);
      std::string packed((m.bits.size() + 7) / 8, '\0');
      for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (m.bits[i]) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
      }
      out += packed;
    }
  }
  return out;
}

Model deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kMagic), "magic") != std::string_view(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(r.get<std::uint32_t>("header length"), "header"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  Model m;
  try {
    m.spec.input_shape = h.at("input_shape").get<Shape>();
    m.spec.classes = h.at("classes").get<int>();
    for (const auto& lj : h.at("layers")) {
      LayerSpec l;
      l.kind = kind_from(lj.at("kind").get<std::string>());
      l.out = lj.at("out").get<int>();
      l.kernel = lj.at("kernel").get<int>();
      l.stride = lj.at("stride").get<int>();
      l.padding = lj.at("padding").get<int>();
      l.bias = lj.at("bias").get<bool>();
      l.eps = lj.at("eps").get<float>();
      l.momentum = lj.at("momentum").get<float>();
      m.spec.layers.push_back(l);
    }
    m.metadata = h.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  m.spec.validate();
  const std::uint32_t count = r.get<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.name();
    Shape s = r.shape();
    Tensor t(s);
    const std::string_view raw = r.bytes(t.size() * sizeof(float), "parameter data");
    std::memcpy(t.ptr(), raw.data(), raw.size());
    m.params.emplace(std::move(name), std::move(t));
  }
  const std::uint32_t masks = r.get<std::uint32_t>("mask count");
  if (h.contains("mask")) {
    SparsityMask sm;
    sm.kappa = h["mask"].at("kappa").get<double>();
    sm.granularity = parse_granularity(h["mask"].at("granularity").get<std::string>());
    for (std::uint32_t i = 0; i < masks; ++i) {
      std::string name = r.name();
      LayerMask lm;
      lm.shape = r.shape();
      const std::size_t n = numel(lm.shape);
      const std::string_view packed = r.bytes((n + 7) / 8, "mask bits");
      lm.bits.resize(n);
      for (std::size_t j = 0; j < n; ++j) lm.bits[j] = (static_cast<unsigned char>(packed[j / 8]) >> (j % 8)) & 1u;
      sm.layers.emplace(std::move(name), std::move(lm));
    }
    m.mask = std::move(sm);
  } else if (masks != 0) {
    throw CheckpointError("mask layers present without a mask header");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  check_consistency(m);
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("cannot write " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t model_hash(const Model& model) { return fnv1a64(serialize_checkpoint(model)); }

}  // namespace rsnn
