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

#ifndef RSNN_DATASET_HPP_
#define RSNN_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rsnn/tensor.hpp"

namespace rsnn {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// In-memory labelled samples; images are [N, sample_shape...] in [0,1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  /// Throws DatasetError unless pixels lie in [0,1] and labels in [0, classes).
  void validate() const;

  Tensor batch_images(std::span<const std::size_t> rows) const;
  std::vector<int> batch_labels(std::span<const std::size_t> rows) const;
  /// First `n` samples (or all when n exceeds the size).
  Dataset head(std::size_t n) const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// Isotropic Gaussian clusters in [0,1]^dim, one per class, clipped.
Dataset make_blobs(std::uint64_t seed, std::size_t n, int classes, int dim, float spread);

/// 16x16 seven-segment digit glyphs with stroke jitter, shifts and pixel
/// noise: a small MNIST-like 10-class task.
Dataset make_glyphs(std::uint64_t seed, std::size_t n);

/// IDX image (magic 0x00000803, u8) and label (0x00000801) file pair.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int classes = 10);
void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels);

/// Raw container: JSON manifest naming a little-endian float32 image blob and
/// an int32 label blob.
Dataset load_raw(const std::filesystem::path& manifest);
void save_raw(const Dataset& ds, const std::filesystem::path& manifest);

}  // namespace rsnn

#endif  // RSNN_DATASET_HPP_
