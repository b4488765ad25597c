#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "vccdsa/checkpoint.hpp"
#include "vccdsa/mdss.hpp"
#include "vccdsa/network.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/rng.hpp"
#include "vccdsa/sample.hpp"

namespace vccdsa {

struct LossConfig {
  double lambda = 0.85;

  void validate() const;
};

struct AugmentParams {
  bool flip = true;
  bool rotate = true;
  bool translate_scale = true;
  bool random_crop = true;
  double max_rotation_deg = 10.0;
  double max_translation = 0.0625;  // fraction of the frame size
  double max_scale_delta = 0.1;

  bool any() const noexcept { return flip || rotate || translate_scale || random_crop; }
};

struct TrainConfig {
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 16;
  int crop_size = 256;
  int total_steps = 2000;
  std::uint64_t seed = 0;
  AugmentParams augment;
  LossConfig loss;
  MdssConfig mdss;
  bool live_only = false;   // single forward on the live frame, L_con = 0
  bool deterministic = true;  // single-threaded loading, wall_ms logged as 0
  int checkpoint_every = 0;   // 0 = final checkpoint only

  void validate() const;
  static TrainConfig desk_scale();  // batch 4, crop 64, 2000 steps
};

struct TrainRecord {
  int step = 0;
  double l_fid1 = 0.0;
  double l_fid2 = 0.0;
  double l_con = 0.0;
  double l_total = 0.0;
  double wall_ms = 0.0;

  bool operator==(const TrainRecord&) const = default;
};

// Uniform draw of two distinct indices in [0, mask_count).
std::pair<int, int> sample_mask_pair_indices(int mask_count, Rng& rng);
std::pair<ImageFrame, ImageFrame> sample_mask_pair(const DSASequence& sequence, Rng& rng);

double fidelity_loss(const ImageFrame& prediction, const ImageFrame& weak_label);
double consistency_loss(const ImageFrame& v_i, const ImageFrame& v_j);
double total_loss(double l_fid1, double l_fid2, double l_con, const LossConfig& cfg);

// Builds a sample for live frame `live_index` with a freshly drawn mask pair.
TrainSample make_train_sample(const DSASequence& sequence, int live_index, Rng& rng);

enum class FlipKind { none, horizontal, vertical };

// One geometric transform plus one crop window, applied identically to every
// frame of a sample.
struct AugmentTransform {
  FlipKind flip = FlipKind::none;
  MotionField affine;  // rotation / translation / scale about the frame center
  int crop_y = 0;
  int crop_x = 0;
  int crop_size = 0;
};

AugmentTransform draw_augmentation(Rng& rng, const AugmentParams& params, int height, int width, int crop_size);
ImageFrame apply_augmentation(const ImageFrame& frame, const AugmentTransform& t);
std::pair<TrainSample, ImageFrame> augment(TrainSample sample, ImageFrame gt, Rng& rng, const AugmentParams& params,
                                           int crop_size);

template <typename T>
struct LossEvaluation {
  double l_fid1 = 0.0;
  double l_fid2 = 0.0;
  double l_con = 0.0;
  double l_total = 0.0;
  std::vector<double> sample_con;  // per-sample L_con
  FeatureMap<T> v_i;               // (1, N, H, W)
  FeatureMap<T> v_j;               // empty for live-only
};

// Objective of one batch. When `grad` is non-empty the parameter gradient of
// L_total is accumulated into it through both forwards.
template <typename T>
LossEvaluation<T> loss_and_gradient(const Network<T>& net, const std::vector<TrainSample>& batch,
                                    const LossConfig& cfg, bool live_only, std::span<T> grad);

void adam_update(std::span<float> params, std::span<const float> grad, AdamState& state, const TrainConfig& cfg);

struct StepResult {
  TrainRecord record;
  LossEvaluation<float> evaluation;
};

// Dual forward + backward + one Adam update. Throws DivergenceError on a
// non-finite loss.
StepResult train_step(Network<float>& net, const std::vector<TrainSample>& batch, const TrainConfig& cfg,
                      AdamState& state, int step);

// Trips when L_total is non-finite, or above 10x its step-10 value for 100
// consecutive steps.
class DivergenceGuard {
 public:
  explicit DivergenceGuard(int reference_step = 10, double factor = 10.0, int patience = 100);
  void observe(int step, double l_total);

 private:
  int reference_step_;
  double factor_;
  int patience_;
  double reference_ = -1.0;
  int over_ = 0;
};

struct BatchItem {
  TrainSample sample;
  ImageFrame gt;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  MdssStats mdss;
  std::size_t bank_size = 0;
  double wall_seconds = 0.0;
  std::uint64_t parameter_hash = 0;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_record;
  std::function<void(int step, const Network<float>&, const AdamState&)> on_checkpoint;
};

void write_train_log_header(std::ostream& out);
void write_train_log_row(std::ostream& out, const TrainRecord& r);

// Runs the training loop over a set of training sequences. Steps iterate a shuffled
// (sequence, live frame) index; every per-step draw comes from a stream keyed
// by (seed, step, slot), so batches do not depend on loader threading or on
// whether MDSS is enabled.
class Trainer {
 public:
  Trainer(Network<float>& net, const std::vector<DSASequence>& data, TrainConfig cfg);
  ~Trainer();

  const TrainConfig& config() const noexcept { return cfg_; }
  int completed_steps() const noexcept { return step_; }
  const VascularBank& bank() const noexcept { return bank_; }
  const AdamState& optimizer() const noexcept { return adam_; }

  // Augmented batch for a 1-based step, before mixup.
  std::vector<BatchItem> draw_batch(int step) const;

  TrainRecord step();
  TrainResult run(const TrainHooks& hooks = {});

 private:
  struct Prefetcher;
  std::vector<BatchItem> next_batch(int step);

  Network<float>& net_;
  const std::vector<DSASequence>& data_;
  TrainConfig cfg_;
  std::vector<std::pair<int, int>> index_;  // (sequence, live frame)
  AdamState adam_;
  VascularBank bank_;
  DivergenceGuard guard_;
  int step_ = 0;
  std::unique_ptr<Prefetcher> prefetch_;
};

}  // namespace vccdsa
