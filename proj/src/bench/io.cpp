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

#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

#include "simmat/bench.hpp"
#include "simmat/checkpoint.hpp"

namespace simmat {

void to_json(nlohmann::json& j, const Manifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) {
    nlohmann::json rec = {{"modality", s.modality}, {"masks", s.masks}};
    if (!s.rgb.empty()) rec["rgb"] = s.rgb;
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& p : s.prompts) prompts.push_back({p.row, p.col});
    rec["prompts"] = std::move(prompts);
    samples.push_back(std::move(rec));
  }
  j = {{"name", m.name}, {"channels", m.channels}, {"split", m.split}, {"seed", m.seed}, {"samples", samples}};
}

void from_json(const nlohmann::json& j, Manifest& m) {
  m.name = j.at("name").get<std::string>();
  m.channels = j.at("channels").get<int>();
  m.split = j.at("split").get<std::string>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.samples.clear();
  for (const auto& rec : j.at("samples")) {
    SampleRecord s;
    s.modality = rec.at("modality").get<std::string>();
    s.rgb = rec.value("rgb", std::string());
    s.masks = rec.at("masks").get<std::vector<std::string>>();
    for (const auto& p : rec.value("prompts", nlohmann::json::array())) {
      s.prompts.push_back({p.at(0).get<int>(), p.at(1).get<int>(), true});
    }
    m.samples.push_back(std::move(s));
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << nlohmann::json(manifest).dump(2) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  Manifest m;
  try {
    m = nlohmann::json::parse(in).get<Manifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }
  m.root = path.parent_path();
  if (m.channels < 1) throw FormatError("manifest '" + path.string() + "': channels must be >= 1");
  for (const auto& s : m.samples) {
    std::vector<std::string> files{s.modality};
    if (!s.rgb.empty()) files.push_back(s.rgb);
    files.insert(files.end(), s.masks.begin(), s.masks.end());
    for (const auto& f : files) {
      if (!std::filesystem::exists(m.root / f)) throw IoError("manifest references missing file '" + f + "'");
    }
  }
  return m;
}

Manifest write_dataset(const std::filesystem::path& dir, const std::string& name, const std::string& split,
                       std::uint64_t seed, const std::vector<InstanceSample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  Manifest m;
  m.name = name;
  m.split = split;
  m.seed = seed;
  m.root = dir;
  m.channels = samples.empty() ? 0 : static_cast<int>(samples.front().modality.dim(0));
  char buf[64];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.modality.dim(0) != m.channels) throw DimensionError("dataset mixes channel counts");
    SampleRecord rec;
    std::snprintf(buf, sizeof buf, "%05zu", i);
    const std::string stem = buf;
    rec.modality = stem + "_modality.tensor";
    write_tensor_file(s.modality, dir / rec.modality);
    if (s.rgb) {
      rec.rgb = stem + "_rgb.tensor";
      write_tensor_file(*s.rgb, dir / rec.rgb);
    }
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
      rec.masks.push_back(stem + "_mask" + std::to_string(k) + ".png");
      write_mask_png(s.instances[k], dir / rec.masks.back());
    }
    rec.prompts = s.prompts;
    m.samples.push_back(std::move(rec));
  }
  write_manifest(m, dir / "manifest.json");
  return m;
}

InstanceSample load_sample(const Manifest& manifest, std::size_t index) {
  const auto& rec = manifest.samples.at(index);
  InstanceSample s;
  s.modality = read_tensor_file(manifest.root / rec.modality);
  if (s.modality.rank() != 3 || s.modality.dim(0) != manifest.channels) {
    throw DimensionError("sample '" + rec.modality + "' has shape " + shape_str(s.modality.shape()) +
                         ", manifest declares " + std::to_string(manifest.channels) + " channels");
  }
  if (!rec.rgb.empty()) s.rgb = read_tensor_file(manifest.root / rec.rgb);
  for (std::size_t k = 0; k < rec.masks.size(); ++k) {
    auto m = read_mask_png(manifest.root / rec.masks[k]);
    if (m.height != s.modality.dim(1) || m.width != s.modality.dim(2)) {
      throw DimensionError("mask '" + rec.masks[k] + "' does not match its modality size");
    }
    s.prompts.push_back(k < rec.prompts.size() ? rec.prompts[k] : center_point(m));
    s.instances.push_back(std::move(m));
  }
  return s;
}

std::vector<InstanceSample> load_samples(const Manifest& manifest) {
  std::vector<InstanceSample> out;
  out.reserve(manifest.samples.size());
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) out.push_back(load_sample(manifest, i));
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(mask.width));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(mask.width), static_cast<png_uint_32>(mask.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) row[static_cast<std::size_t>(c)] = mask.at(r, c) ? 255 : 0;
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  BinaryMask mask;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto w = static_cast<int>(png_get_image_width(png, info));
  const auto h = static_cast<int>(png_get_image_height(png, info));
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);
  mask = BinaryMask(h, w);
  std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c) mask.at(r, c) = row[static_cast<std::size_t>(c)] >= 128;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return mask;
}

}  // namespace simmat
