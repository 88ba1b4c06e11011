#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gateshare/backbone.hpp"
#include "gateshare/losses.hpp"
#include "gateshare/synthdata.hpp"
#include "gateshare/trainer.hpp"

namespace gateshare {

/// Full experiment description, parsed from a JSON file. Validation is strict:
/// unknown keys anywhere are rejected before any compute runs.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/out";

  bool use_synthetic = true;
  SynthTaskSpec synth;
  std::string csv_path;

  // Backbone topology; heads are derived from the dataset's task list.
  std::size_t feature_dim = 32;
  std::size_t num_blocks = 8;
  std::vector<std::size_t> hidden_widths;
  std::vector<bool> gate_enable;  // default: trailing half gated
  std::vector<bool> always_on;    // default: leading half always on
  std::size_t gate_hidden = 0;

  TrainConfig train;
  LossWeights losses;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;
  std::string config_hash() const;

  MultiTaskData load_data() const;
  BackboneSpec backbone_spec(const MultiTaskData& data) const;
};

}  // namespace gateshare
