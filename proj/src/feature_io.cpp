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

#include "spoofdet/feature_io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "spoofdet/error.hpp"

namespace spoofdet {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'D', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeFloat32 = 0;

static_assert(std::endian::native == std::endian::little,
              "ESDF I/O assumes a little-endian host");
static_assert(sizeof(float) == 4, "ESDF payload assumes 32-bit floats");

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is, const char* field) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (is.gcount() != 4) {
    throw CorruptionError(std::string("ESDF: truncated header while reading ") + field);
  }
  return v;
}

}  // namespace

FeatureStack::FeatureStack(int layers, int frames, int dim) : L(layers), T(frames), D(dim) {
  if (L < 1 || T < 1 || D < 1) {
    throw DimensionError("FeatureStack: extents must be positive, got L=" + std::to_string(L) +
                         " T=" + std::to_string(T) + " D=" + std::to_string(D));
  }
  values.assign(static_cast<std::size_t>(L) * static_cast<std::size_t>(T) *
                    static_cast<std::size_t>(D),
                0.0f);
}

void FeatureStack::validate() const {
  if (L < 1 || T < 1 || D < 1) {
    throw DimensionError("FeatureStack: extents must be positive, got L=" + std::to_string(L) +
                         " T=" + std::to_string(T) + " D=" + std::to_string(D));
  }
  const std::size_t expected = static_cast<std::size_t>(L) * static_cast<std::size_t>(T) *
                               static_cast<std::size_t>(D);
  if (values.size() != expected) {
    throw DimensionError("FeatureStack: L*T*D = " + std::to_string(expected) +
                         " values expected, got " + std::to_string(values.size()));
  }
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("FeatureStack: non-finite value in feature data");
    }
  }
}

std::size_t write_feature_stack(const FeatureStack& stack, std::ostream& dest) {
  stack.validate();
  dest.write(kMagic, 4);
  put_u32(dest, kVersion);
  put_u32(dest, static_cast<std::uint32_t>(stack.L));
  put_u32(dest, static_cast<std::uint32_t>(stack.T));
  put_u32(dest, static_cast<std::uint32_t>(stack.D));
  put_u32(dest, kDtypeFloat32);
  dest.write(reinterpret_cast<const char*>(stack.values.data()),
             static_cast<std::streamsize>(stack.values.size() * 4));
  if (!dest) throw IoError("ESDF: write failed");
  return 24 + stack.values.size() * 4;
}

std::size_t write_feature_stack_file(const FeatureStack& stack, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("ESDF: cannot open for writing: " + path);
  return write_feature_stack(stack, os);
}

FeatureStack read_feature_stack(std::istream& src) {
  char magic[4] = {};
  src.read(magic, 4);
  if (src.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("ESDF: bad magic, expected \"ESDF\"");
  }
  const std::uint32_t version = get_u32(src, "version");
  if (version != kVersion) {
    throw UnsupportedVersionError("ESDF: unsupported version " + std::to_string(version) +
                                  ", this build reads version 1");
  }
  const std::uint32_t l = get_u32(src, "L");
  const std::uint32_t t = get_u32(src, "T");
  const std::uint32_t d = get_u32(src, "D");
  const std::uint32_t dtype = get_u32(src, "dtype");
  if (dtype != kDtypeFloat32) {
    throw FormatError("ESDF: unknown dtype code " + std::to_string(dtype));
  }
  if (l < 1 || t < 1 || d < 1) {
    throw FormatError("ESDF: non-positive extents L=" + std::to_string(l) +
                      " T=" + std::to_string(t) + " D=" + std::to_string(d));
  }
  FeatureStack stack(static_cast<int>(l), static_cast<int>(t), static_cast<int>(d));
  const std::size_t expected_bytes = stack.values.size() * 4;
  src.read(reinterpret_cast<char*>(stack.values.data()),
           static_cast<std::streamsize>(expected_bytes));
  const std::size_t got_bytes = static_cast<std::size_t>(src.gcount());
  if (got_bytes != expected_bytes) {
    throw CorruptionError("ESDF: payload truncated, expected " + std::to_string(expected_bytes) +
                          " bytes, got " + std::to_string(got_bytes));
  }
  return stack;
}

FeatureStack read_feature_stack_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("ESDF: cannot open for reading: " + path);
  return read_feature_stack(is);
}

std::string label_name(Label label) {
  return label == Label::bonafide ? "bonafide" : "spoof";
}

Label parse_label(const std::string& name) {
  if (name == "bonafide") return Label::bonafide;
  if (name == "spoof") return Label::spoof;
  throw ParseError("label must be \"bonafide\" or \"spoof\", got \"" + name + "\"");
}

namespace {

const std::set<std::string> kSplits = {"train", "dev", "eval_seen", "eval_unseen"};

ManifestEntry parse_manifest_line(const std::string& line, std::size_t line_no) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("manifest line " + std::to_string(line_no) + ": expected a JSON object");
  }
  ManifestEntry entry;
  try {
    entry.utt_id = doc.at("utt_id").get<std::string>();
    entry.path = doc.at("path").get<std::string>();
    entry.label = parse_label(doc.at("label").get<std::string>());
    entry.generator_id = doc.at("generator").get<std::string>();
    entry.split = doc.at("split").get<std::string>();
  } catch (const ParseError& e) {
    throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
  }
  if (entry.utt_id.empty()) {
    throw ParseError("manifest line " + std::to_string(line_no) + ": empty utt_id");
  }
  if (!kSplits.contains(entry.split)) {
    throw ParseError("manifest line " + std::to_string(line_no) + ": unknown split \"" +
                     entry.split + "\"");
  }
  if (entry.label == Label::bonafide && entry.generator_id != "-") {
    throw IntegrityError("manifest line " + std::to_string(line_no) + ": bonafide utt \"" +
                         entry.utt_id + "\" must carry generator \"-\"");
  }
  if (entry.label == Label::spoof && (entry.generator_id.empty() || entry.generator_id == "-")) {
    throw IntegrityError("manifest line " + std::to_string(line_no) + ": spoof utt \"" +
                         entry.utt_id + "\" must carry a non-empty generator id");
  }
  return entry;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(std::istream& src) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(src, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestEntry entry = parse_manifest_line(line, line_no);
    if (!seen_ids.insert(entry.utt_id).second) {
      throw IntegrityError("manifest line " + std::to_string(line_no) + ": duplicate utt_id \"" +
                           entry.utt_id + "\"");
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ManifestEntry> load_manifest_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open for reading: " + path);
  return load_manifest(is);
}

void write_manifest(const std::vector<ManifestEntry>& entries, std::ostream& dest) {
  for (const ManifestEntry& e : entries) {
    nlohmann::json doc{{"utt_id", e.utt_id},
                       {"path", e.path},
                       {"label", label_name(e.label)},
                       {"generator", e.generator_id},
                       {"split", e.split}};
    dest << doc.dump() << "\n";
  }
  if (!dest) throw IoError("manifest: write failed");
}

void write_manifest_file(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot open for writing: " + path);
  write_manifest(entries, os);
}

std::string resolve_feature_path(const std::string& manifest_path, const ManifestEntry& entry) {
  const std::filesystem::path p(entry.path);
  if (p.is_absolute()) return entry.path;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

namespace {

FeatureStack crop_at(const FeatureStack& stack, int t_target, int offset) {
  FeatureStack out(stack.L, t_target, stack.D);
  for (int l = 0; l < stack.L; ++l) {
    for (int t = 0; t < t_target; ++t) {
      const int src_t = (offset + t) % stack.T;  // wraps only when T < t_target
      std::memcpy(&out.at(l, t, 0), &stack.at(l, src_t, 0),
                  static_cast<std::size_t>(stack.D) * 4);
    }
  }
  return out;
}

}  // namespace

FeatureStack random_crop(const FeatureStack& stack, int t_target, RngStream& rng) {
  if (t_target < 1) throw ContractError("random_crop: t_target must be >= 1");
  if (stack.T == t_target) return stack;
  if (stack.T < t_target) return crop_at(stack, t_target, 0);
  const int offset =
      static_cast<int>(rng.next_below(static_cast<std::uint64_t>(stack.T - t_target + 1)));
  return crop_at(stack, t_target, offset);
}

FeatureStack center_crop(const FeatureStack& stack, int t_target) {
  if (t_target < 1) throw ContractError("center_crop: t_target must be >= 1");
  if (stack.T == t_target) return stack;
  if (stack.T < t_target) return crop_at(stack, t_target, 0);
  return crop_at(stack, t_target, (stack.T - t_target) / 2);
}

}  // namespace spoofdet
