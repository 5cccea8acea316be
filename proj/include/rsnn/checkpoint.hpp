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

#ifndef RSNN_CHECKPOINT_HPP_
#define RSNN_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rsnn/network.hpp"

namespace rsnn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Byte layout (little-endian):
///   "RSNNCKPT" u32 version
///   u32 n, n bytes of JSON (network, metadata, mask kappa/granularity)
///   u32 count, then per parameter: u32 name length, name, u32 ndim,
///     u64 dims[ndim], float32 data[prod(dims)]
///   u32 count, then per mask layer: u32 name length, name, u32 ndim,
///     u64 dims[ndim], ceil(prod/8) bytes of bits, LSB first
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
/// fnv1a64 of the serialized checkpoint.
std::uint64_t model_hash(const Model& model);

}  // namespace rsnn

#endif  // RSNN_CHECKPOINT_HPP_
