// Copyright 2026 The SimMAT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "simmat/model.hpp"
#include "simmat/tensor.hpp"

namespace simmat {

/// Named-tensor container.
///
/// File layout (all integers little-endian):
///   byte 0        format version (currently 1)
///   bytes 1..8    u64 length L of the JSON header
///   next L bytes  UTF-8 JSON header:
///                   {"format_version": 1,
///                    "metadata": {string: string, ...},
///                    "payload_bytes": P,
///                    "tensors": [{"name", "dtype": "f32", "shape": [...],
///                                 "offset": byte offset into payload,
///                                 "trainable": bool}, ...]}
///   next P bytes  payload: contiguous fp32 little-endian values, tensors
///                 in table order with no gaps
struct CheckpointEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

struct Checkpoint {
  int format_version = 1;
  std::map<std::string, std::string> metadata;
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(const std::string& name) const;
};

inline constexpr int kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError naming the offending tensor on any inconsistency.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter plus config, seed and finetuning state.
Checkpoint make_checkpoint(const Model& model);

/// Rebuilds a model from the base and injected tensors of `ckpt` (other
/// prefixes such as mat. are ignored). Every tensor shape is validated
/// against `expected` when given, otherwise against the config snapshot.
Model model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected = nullptr);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

/// Single-tensor file in the same container (dataset modality / RGB files).
void write_tensor_file(const Tensor& tensor, const std::filesystem::path& path);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace simmat
