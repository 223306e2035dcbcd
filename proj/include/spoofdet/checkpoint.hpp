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

#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "spoofdet/mhfa.hpp"

namespace spoofdet {

/// A loaded model file: architecture config, trained parameters, free-form
/// metadata recorded at save time.
struct Checkpoint {
  MhfaConfig config;
  MhfaParams<float> params;
  nlohmann::json extra;
};

// Single-file format: u32 little-endian header length, a JSON header
// (format tag, version, config, parameter registry with name/shape/
// byte_offset, extra), then the raw little-endian float32 blobs in registry
// order. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const MhfaConfig& cfg,
                     const MhfaParams<float>& params,
                     const nlohmann::json& extra = nlohmann::json::object());

Checkpoint load_checkpoint(const std::string& path);

}  // namespace spoofdet
