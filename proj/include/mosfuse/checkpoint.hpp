// Copyright 2025 The mosfuse Authors. All rights reserved.
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

#ifndef MOSFUSE_CHECKPOINT_HPP_
#define MOSFUSE_CHECKPOINT_HPP_

#include <memory>
#include <string>

#include <json.hpp>

#include "mosfuse/fusion.hpp"

namespace mosfuse::checkpoint {

inline constexpr const char* kFormatTag = "mosfuse-ckpt-v1";

/// One archive per model: format tag, architecture, domain vocabulary,
/// all parameter tensors, and the full run-config snapshot.
void save(const std::string& path, fusion::Predictor& model,
          const nlohmann::json& config_snapshot);

struct Loaded {
  std::unique_ptr<fusion::Predictor> model;
  nlohmann::json config_snapshot;
};

Loaded load(const std::string& path);

}  // namespace mosfuse::checkpoint

#endif  // MOSFUSE_CHECKPOINT_HPP_
