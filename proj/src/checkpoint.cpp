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

#include "mosfuse/checkpoint.hpp"

#include <fstream>

#include "mosfuse/config.hpp"

using nlohmann::json;

namespace mosfuse::checkpoint {

void save(const std::string& path, fusion::Predictor& model, const json& config_snapshot) {
  json j;
  j["format"] = kFormatTag;
  j["model"] = model_spec_to_json(model.model_spec());
  j["audio"] = audio_config_to_json(model.audio_config());
  j["vocabulary"] = model.domain() ? model.domain()->vocabulary() : std::vector<std::string>{};
  j["config"] = config_snapshot;
  json params = json::object();
  for (const Param* p : model.params().all()) {
    params[p->name] = {{"shape", p->value.shape}, {"data", p->value.data}};
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  MOSFUSE_CHECK(out.good(), "checkpoint: cannot open '" + path + "' for writing");
  out << j.dump();
  MOSFUSE_CHECK(out.good(), "checkpoint: write failed for '" + path + "'");
}

Loaded load(const std::string& path) {
  std::ifstream in(path);
  MOSFUSE_CHECK(in.good(), "checkpoint: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    MOSFUSE_CHECK(false, "checkpoint: '" + path + "' is not valid JSON: " + std::string(e.what()));
  }
  MOSFUSE_CHECK(j.value("format", "") == kFormatTag,
                "checkpoint: '" + path + "' has an unsupported format tag");

  fusion::ModelSpec spec = model_spec_from_json(j.at("model"));
  audio::AudioConfig acfg = audio_config_from_json(j.at("audio"));
  spec.ssl.sample_rate = acfg.sample_rate;
  std::vector<std::string> vocab = j.at("vocabulary").get<std::vector<std::string>>();

  Loaded out;
  out.model = std::make_unique<fusion::Predictor>(spec, acfg, std::move(vocab));
  out.config_snapshot = j.value("config", json::object());

  const json& params = j.at("params");
  std::size_t assigned = 0;
  for (Param* p : out.model->params().all()) {
    MOSFUSE_CHECK(params.contains(p->name),
                  "checkpoint: '" + path + "' is missing parameter '" + p->name + "'");
    const json& entry = params.at(p->name);
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> data = entry.at("data").get<std::vector<double>>();
    MOSFUSE_CHECK(shape == p->value.shape && data.size() == p->value.data.size(),
                  "checkpoint: parameter '" + p->name + "' has the wrong shape");
    p->value.data = std::move(data);
    ++assigned;
  }
  MOSFUSE_CHECK(assigned == params.size(),
                "checkpoint: '" + path + "' contains extra parameters not present in the model");
  return out;
}

}  // namespace mosfuse::checkpoint
