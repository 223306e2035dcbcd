// Copyright (c) 2026 The spoofdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spoofdet/checkpoint.hpp"

#include <cstdint>
#include <fstream>

#include "spoofdet/config.hpp"
#include "spoofdet/error.hpp"

namespace spoofdet {

namespace {

constexpr const char* kFormatTag = "spoofdet-checkpoint";
constexpr int kFormatVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const MhfaConfig& cfg,
                     const MhfaParams<float>& params, const nlohmann::json& extra) {
  MhfaParams<float>& mutable_params = const_cast<MhfaParams<float>&>(params);
  const auto refs = param_registry(mutable_params);

  nlohmann::json header{{"format", kFormatTag},
                        {"version", kFormatVersion},
                        {"config", cfg},
                        {"extra", extra}};
  nlohmann::json param_list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& ref : refs) {
    param_list.push_back(nlohmann::json{
        {"name", ref.name}, {"shape", ref.tensor->shape}, {"byte_offset", offset}});
    offset += ref.tensor->data.size() * 4;
  }
  header["params"] = std::move(param_list);
  const std::string header_bytes = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
  const std::uint32_t header_len = static_cast<std::uint32_t>(header_bytes.size());
  os.write(reinterpret_cast<const char*>(&header_len), 4);
  os.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& ref : refs) {
    os.write(reinterpret_cast<const char*>(ref.tensor->data.data()),
             static_cast<std::streamsize>(ref.tensor->data.size() * 4));
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open for reading: " + path);

  std::uint32_t header_len = 0;
  is.read(reinterpret_cast<char*>(&header_len), 4);
  if (is.gcount() != 4) throw CorruptionError("checkpoint: truncated header length field");
  std::string header_bytes(header_len, '\0');
  is.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint32_t>(is.gcount()) != header_len) {
    throw CorruptionError("checkpoint: truncated header, expected " + std::to_string(header_len) +
                          " bytes, got " + std::to_string(is.gcount()));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kFormatTag) {
    throw FormatError("checkpoint: missing format tag \"" + std::string(kFormatTag) + "\"");
  }
  const int version = header.value("version", -1);
  if (version != kFormatVersion) {
    throw UnsupportedVersionError("checkpoint: unsupported version " + std::to_string(version) +
                                  ", this build reads version " +
                                  std::to_string(kFormatVersion));
  }

  Checkpoint ckpt;
  try {
    ckpt.config = header.at("config").get<MhfaConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config section: ") + e.what());
  }
  ckpt.extra = header.value("extra", nlohmann::json::object());
  ckpt.params = zero_params<float>(ckpt.config);
  const auto refs = param_registry(ckpt.params);

  if (!header.contains("params") || !header.at("params").is_array() ||
      header.at("params").size() != refs.size()) {
    throw CorruptionError("checkpoint: parameter registry size mismatch, expected " +
                          std::to_string(refs.size()) + " entries");
  }
  const std::streamoff blob_start = 4 + static_cast<std::streamoff>(header_len);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const nlohmann::json& entry = header.at("params").at(i);
    const std::string name = entry.value("name", "");
    if (name != refs[i].name) {
      throw CorruptionError("checkpoint: parameter " + std::to_string(i) + " is \"" + name +
                            "\", expected \"" + refs[i].name + "\"");
    }
    const std::vector<int> shape = entry.value("shape", std::vector<int>{});
    if (shape != refs[i].tensor->shape) {
      throw CorruptionError("checkpoint: parameter \"" + name + "\" has shape " +
                            shape_str(shape) + ", expected " + shape_str(refs[i].tensor->shape));
    }
    const std::uint64_t offset = entry.value("byte_offset", std::uint64_t{0});
    is.clear();
    is.seekg(blob_start + static_cast<std::streamoff>(offset));
    const std::size_t expected = refs[i].tensor->data.size() * 4;
    is.read(reinterpret_cast<char*>(refs[i].tensor->data.data()),
            static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(is.gcount()) != expected) {
      throw CorruptionError("checkpoint: parameter \"" + name + "\" truncated, expected " +
                            std::to_string(expected) + " bytes, got " +
                            std::to_string(is.gcount()));
    }
  }
  return ckpt;
}

}  // namespace spoofdet
