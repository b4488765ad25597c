#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vccdsa/baselines.hpp"
#include "vccdsa/network.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/training.hpp"

namespace vccdsa {

struct DatasetSpec {
  PhantomConfig phantom;
  std::vector<int> levels{2};  // assigned to sequences round-robin
  int sequences = 80;
  std::uint64_t seed = 1000;
  std::array<int, 3> split{70, 10, 20};  // train / val / test percent
  std::string label_source = "subtract";  // or "translate_reg"
};

struct EvalSpec {
  int timing_warmup = 3;
  int timing_repeats = 20;
  std::vector<int> motion_levels{0, 1, 2, 3, 4, 5};
  int save_frames = 4;  // predicted PNG frames written per method, 0 = none
};

// Every field is addressable as a dotted key, e.g. `train.total_steps = 500`.
struct ExperimentConfig {
  DatasetSpec dataset;
  ArchConfig arch = ArchConfig::desk_scale();
  TrainConfig train = TrainConfig::desk_scale();
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.85, 0.99};
  std::vector<std::string> methods{"vccdsa", "live_only", "subtract", "translate_reg"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  RegistrationConfig registration;
  EvalSpec eval;
  std::string out_dir = "vccdsa_out";

  void validate() const;
};

// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
ExperimentConfig parse_experiment_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base = {});
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Accepts "key=value".
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Canonical text form; parse_experiment_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace vccdsa
