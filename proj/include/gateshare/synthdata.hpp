#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "gateshare/data.hpp"
#include "gateshare/rng.hpp"

namespace gateshare {

/// Nested-clusters multi-task benchmark. Instances are drawn around coarse
/// centroids on radial shells:
///   x = c_m + (r_s + jitter * z) * u + ambient * eps
/// Task 0 classifies the coarse cluster m (linearly separable). Task 1
/// classifies the (m, s) pair; the shell index s is a function of the radius,
/// so it is not linearly separable but is learnable by a deeper network.
/// Task 2 (optional) regresses the distance to the assigned centroid.
///
/// A fraction `heterogeneity` of instances is "easy": their radial jitter is
/// shrunk, so their shells have wide margins and remain separable through a
/// shallow execution path.
struct SynthTaskSpec {
  std::size_t n_train = 4000;
  std::size_t n_val = 1000;
  std::size_t n_test = 1000;
  std::size_t input_dim = 16;
  std::size_t coarse_classes = 4;
  std::size_t sub_per_coarse = 3;
  bool include_regression = false;
  double heterogeneity = 0.5;  // fraction of easy instances

  double centroid_scale = 6.0;
  double shell_base = 1.0;
  double shell_gap = 0.75;
  double jitter_hard = 0.28;
  double jitter_easy = 0.05;
  double ambient_noise = 0.05;

  std::size_t fine_classes() const { return coarse_classes * sub_per_coarse; }
  void validate() const;

  nlohmann::json to_json() const;
  static SynthTaskSpec from_json(const nlohmann::json& j);
};

/// Deterministic generation: identical (spec, seed) pairs produce bitwise
/// identical datasets. Class counts are exactly balanced per split.
MultiTaskData generate(const SynthTaskSpec& spec, std::uint64_t seed);

/// CSV round trip. Columns: f0..f{d-1}, one label column per task named
/// task{k}:{kind}, and a final split column in {train,val,test}. Values are
/// written with enough digits to round-trip exactly.
void save_csv(const MultiTaskData& data, const std::string& path);
MultiTaskData load_csv(const std::string& path);

/// Validates classification labels of a loaded dataset against declared class
/// counts; errors carry the first offending row index.
void validate_against_spec(const MultiTaskData& data, const SynthTaskSpec& spec);

}  // namespace gateshare
