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

#include "simmat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace simmat {
namespace {

using nlohmann::json;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

constexpr std::size_t kPreamble = 9;

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  json header;
  header["format_version"] = ckpt.format_version;
  header["metadata"] = ckpt.metadata;
  json table = json::array();
  std::uint64_t offset = 0;
  std::set<std::string> names;
  for (const auto& e : ckpt.tensors) {
    if (!names.insert(e.name).second) throw FormatError("duplicate tensor '" + e.name + "'");
    table.push_back({{"name", e.name}, {"dtype", "f32"}, {"shape", e.tensor.shape()},
                     {"offset", offset}, {"trainable", e.trainable}});
    offset += static_cast<std::uint64_t>(e.tensor.numel()) * 4;
  }
  header["tensors"] = std::move(table);
  header["payload_bytes"] = offset;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + text.size() + offset);
  out.push_back(static_cast<std::uint8_t>(ckpt.format_version));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : ckpt.tensors)
    for (float f : e.tensor.data()) put_f32(out, f);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kPreamble) throw FormatError("checkpoint truncated: missing header preamble");
  Checkpoint ckpt;
  ckpt.format_version = bytes[0];
  if (ckpt.format_version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.format_version));
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 1);
  if (header_len > bytes.size() - kPreamble) throw FormatError("checkpoint truncated: header length exceeds file");
  json header;
  try {
    header = json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  const std::size_t payload_start = kPreamble + header_len;
  const std::uint64_t payload_len = bytes.size() - payload_start;
  try {
    if (header.at("format_version").get<int>() != ckpt.format_version) {
      throw FormatError("checkpoint header version disagrees with version byte");
    }
    ckpt.metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    const auto declared = header.at("payload_bytes").get<std::uint64_t>();
    if (declared != payload_len) {
      throw FormatError("checkpoint payload is " + std::to_string(payload_len) + " bytes, header declares " +
                        std::to_string(declared));
    }
    std::uint64_t expected_offset = 0;
    std::set<std::string> names;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      if (!names.insert(name).second) throw FormatError("duplicate tensor '" + name + "'");
      if (entry.at("dtype").get<std::string>() != "f32") throw FormatError("tensor '" + name + "': unsupported dtype");
      const auto shape = entry.at("shape").get<Shape>();
      std::int64_t numel = 1;
      for (auto d : shape) {
        if (d <= 0) throw FormatError("tensor '" + name + "': non-positive dimension");
        numel *= d;
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (offset != expected_offset) {
        throw FormatError("tensor '" + name + "': offset " + std::to_string(offset) + " overlaps or leaves a gap (expected " +
                          std::to_string(expected_offset) + ")");
      }
      const std::uint64_t size = static_cast<std::uint64_t>(numel) * 4;
      if (offset + size > payload_len) throw FormatError("tensor '" + name + "': payload truncated");
      std::vector<float> data(static_cast<std::size_t>(numel));
      const std::uint8_t* p = bytes.data() + payload_start + offset;
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f32(p + 4 * i);
      ckpt.tensors.push_back({name, Tensor(shape, std::move(data)), entry.value("trainable", true)});
      expected_offset = offset + size;
    }
    if (expected_offset != payload_len) throw FormatError("checkpoint payload has trailing bytes");
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const Model& model) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = "simmat-model";
  ckpt.metadata["config"] = json(model.config()).dump();
  ckpt.metadata["seed"] = std::to_string(model.seed());
  ckpt.metadata["peft"] = json(model.peft()).dump();
  for (const auto& p : model.params().items()) ckpt.tensors.push_back({p.name, p.var.value(), p.trainable});
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig* expected) {
  ModelConfig snapshot;
  PeftState peft;
  std::uint64_t seed = 0;
  try {
    snapshot = json::parse(ckpt.metadata.at("config")).get<ModelConfig>();
    seed = std::stoull(ckpt.metadata.at("seed"));
    if (auto it = ckpt.metadata.find("peft"); it != ckpt.metadata.end()) peft = json::parse(it->second).get<PeftState>();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  const ModelConfig& config = expected ? *expected : snapshot;
  auto specs = model_param_specs(config);
  const auto injected = injected_param_specs(config, peft);
  specs.insert(specs.end(), injected.begin(), injected.end());

  ParamStore store;
  std::set<std::string> known;
  for (const auto& spec : specs) {
    const auto* entry = ckpt.find(spec.name);
    if (!entry) throw FormatError("tensor '" + spec.name + "' missing from checkpoint");
    if (entry->tensor.shape() != spec.shape) {
      throw FormatError("tensor '" + spec.name + "' has shape " + shape_str(entry->tensor.shape()) +
                        ", config expects " + shape_str(spec.shape));
    }
    store.add(spec.name, entry->tensor, entry->trainable);
    known.insert(spec.name);
  }
  for (const auto& e : ckpt.tensors) {
    const bool model_prefix = e.name.starts_with("encoder.") || e.name.starts_with("prompt.") || e.name.starts_with("decoder.");
    if (model_prefix && !known.count(e.name)) throw FormatError("unexpected tensor '" + e.name + "' in checkpoint");
  }
  Model model(config, seed, std::move(store));
  model.peft() = peft;
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_checkpoint(make_checkpoint(model), path);
}

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  return model_from_checkpoint(read_checkpoint(path), expected);
}

void write_tensor_file(const Tensor& tensor, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = "simmat-tensor";
  ckpt.tensors.push_back({"data", tensor, false});
  write_checkpoint(ckpt, path);
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  const auto* e = ckpt.find("data");
  if (!e || ckpt.tensors.size() != 1) throw FormatError("'" + path.string() + "' is not a single-tensor file");
  return e->tensor;
}

}  // namespace simmat
