#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vccdsa/experiment_config.hpp"
#include "vccdsa/mdss.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/training.hpp"

namespace vccdsa {

namespace fs = std::filesystem;

std::string version_string();

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

// train = floor(n * p_train / 100), val = floor(n * p_val / 100), test = rest.
SplitCounts split_counts(int sequences, const std::array<int, 3>& percent);

std::uint64_t sequence_seed(const DatasetSpec& spec, int index);
int sequence_level(const DatasetSpec& spec, int index);

struct DatasetLayout {
  fs::path root;
  std::string hash;
  std::vector<fs::path> train;
  std::vector<fs::path> val;
  std::vector<fs::path> test;
  std::vector<int> test_indices;  // sequence indices of the test split
};

std::string dataset_hash(const ExperimentConfig& cfg);
// Builds one sequence of the dataset (applies the configured label source).
DSASequence build_dataset_sequence(const ExperimentConfig& cfg, int index, int level);
std::vector<DSASequence> load_sequences(const std::vector<fs::path>& dirs);

// Writes <out>/datasets/<hash>/{train,val,test}/seq_*/ plus dataset.json.
// An existing complete dataset with the same hash is reused.
DatasetLayout cmd_generate(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log = nullptr);

struct RunSpec {
  std::string method = "vccdsa";  // vccdsa | live_only
  double lambda = 0.85;
  bool mdss = true;
  std::uint64_t seed = 0;
};

// The configured method settings for `method`; live_only forces lambda 0 and
// MDSS off (single forward, L_con = 0).
RunSpec default_run(const ExperimentConfig& cfg, const std::string& method = "vccdsa");
ExperimentConfig resolve_run_config(const ExperimentConfig& cfg, const RunSpec& spec);
std::string run_hash(const ExperimentConfig& cfg, const RunSpec& spec);

struct RunOutcome {
  fs::path dir;
  fs::path checkpoint;
  bool reused = false;
  double train_seconds = 0.0;
  std::size_t parameter_count = 0;
  MdssStats mdss;
};

// Runs are content-addressed as <out>/runs/<method>-<hash12>; completed runs
// are reused.
RunOutcome cmd_train(const ExperimentConfig& cfg, const RunSpec& spec, const fs::path& out,
                     std::ostream* log = nullptr);
// Re-runs whatever is missing for the run described by a run_manifest.json.
RunOutcome resume_from_manifest(const fs::path& manifest, std::ostream* log = nullptr);

struct EvalMethod {
  std::string name;         // tag in the CSV rows
  std::string kind;         // network | subtract | translate_reg
  fs::path checkpoint;      // network only
};

struct LevelSummary {
  std::size_t frames = 0;
  double ssim = 0.0;
  double psnr = 0.0;
};

struct MethodSummary {
  std::string method;
  std::size_t frames = 0;
  double ssim = 0.0;  // mean over frames, percent
  double psnr = 0.0;  // mean over frames, dB
  double inference_ms = 0.0;
  std::map<int, LevelSummary> by_level;
};

struct EvalOutcome {
  fs::path dir;
  std::vector<MethodSummary> methods;

  const MethodSummary& at(const std::string& method) const;
};

// Scores every method on every live frame (mask = masks[0], reference =
// vessels_gt) and writes metrics.csv, summary.json and frame previews.
EvalOutcome evaluate(const ExperimentConfig& cfg, const std::vector<EvalMethod>& methods,
                     const std::vector<fs::path>& sequences, const fs::path& dir, std::ostream* log = nullptr);

// Evaluates cfg.methods on the test split, training network methods as needed.
EvalOutcome cmd_eval(const ExperimentConfig& cfg, const fs::path& out,
                     const std::optional<fs::path>& checkpoint = std::nullopt, std::ostream* log = nullptr);

struct LambdaPoint {
  double lambda = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  fs::path run;
};

struct LambdaSweep {
  fs::path dir;
  std::vector<LambdaPoint> points;
};

LambdaSweep cmd_sweep_lambda(const ExperimentConfig& cfg, const fs::path& out, std::ostream* log = nullptr);

struct MotionSweep {
  fs::path dir;
  fs::path checkpoint;
  std::vector<int> levels;
  // method -> one summary per level, in `levels` order
  std::map<std::string, std::vector<MethodSummary>> rows;
};

// One fixed checkpoint scored on test sets at each motion level; the test
// sequences use the same seeds at every level.
MotionSweep cmd_sweep_motion(const ExperimentConfig& cfg, const fs::path& out,
                             const std::optional<fs::path>& checkpoint = std::nullopt, std::ostream* log = nullptr);

struct AblationArm {
  std::string label;
  std::vector<RunSpec> runs;  // one per seed
  std::vector<double> psnr;
  std::vector<double> ssim;

  double mean_psnr() const;
  double mean_ssim() const;
};

struct Ablation {
  std::string kind;  // lsmp | vcs | mdss
  fs::path dir;
  AblationArm with;     // full method
  AblationArm without;  // component removed
};

Ablation cmd_ablate(const ExperimentConfig& cfg, const std::string& kind, const fs::path& out,
                    std::ostream* log = nullptr);

// Collects every summary under <out> into <out>/report.md.
fs::path cmd_report(const ExperimentConfig& cfg, const fs::path& out);

// Writes run_manifest-style inventory entries for every regular file under dir
// (except excluded names).
std::vector<std::pair<std::string, std::string>> file_inventory(const fs::path& dir,
                                                                const std::vector<std::string>& exclude = {});

}  // namespace vccdsa
