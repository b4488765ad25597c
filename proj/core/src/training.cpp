#include "vccdsa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "vccdsa/error.hpp"

namespace vccdsa {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (crop_size < 16 || crop_size % 8 != 0) throw ConfigError("crop_size must be >= 16 and divisible by 8");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  loss.validate();
  mdss.validate();
}

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.batch_size = 4;
  c.crop_size = 64;
  c.total_steps = 2000;
  return c;
}

std::pair<int, int> sample_mask_pair_indices(int mask_count, Rng& rng) {
  if (mask_count < 2) throw DataError("mask pair sampling needs at least two mask frames");
  const int i = rng.uniform_int(mask_count);
  int j = rng.uniform_int(mask_count - 1);
  if (j >= i) ++j;
  return {i, j};
}

std::pair<ImageFrame, ImageFrame> sample_mask_pair(const DSASequence& sequence, Rng& rng) {
  const auto [i, j] = sample_mask_pair_indices(static_cast<int>(sequence.masks.size()), rng);
  return {sequence.masks[static_cast<std::size_t>(i)], sequence.masks[static_cast<std::size_t>(j)]};
}

double fidelity_loss(const ImageFrame& prediction, const ImageFrame& weak_label) {
  require_same_shape(prediction, weak_label, "fidelity_loss");
  return mean_abs_diff(prediction, weak_label);
}

double consistency_loss(const ImageFrame& v_i, const ImageFrame& v_j) {
  require_same_shape(v_i, v_j, "consistency_loss");
  return mean_abs_diff(v_i, v_j);
}

double total_loss(double l_fid1, double l_fid2, double l_con, const LossConfig& cfg) {
  return (1.0 - cfg.lambda) * (l_fid1 + l_fid2) / 2.0 + cfg.lambda * l_con;
}

TrainSample make_train_sample(const DSASequence& sequence, int live_index, Rng& rng) {
  if (live_index < 0 || live_index >= static_cast<int>(sequence.lives.size())) {
    throw ArgumentError("live frame index out of range");
  }
  const auto [i, j] = sample_mask_pair_indices(static_cast<int>(sequence.masks.size()), rng);
  TrainSample s;
  s.mask_i = sequence.masks[static_cast<std::size_t>(i)];
  s.mask_j = sequence.masks[static_cast<std::size_t>(j)];
  s.live = sequence.lives[static_cast<std::size_t>(live_index)];
  s.weak_label = sequence.weak_labels[static_cast<std::size_t>(live_index)];
  s.provenance.sequence_id = sequence.id;
  s.provenance.live_index = live_index;
  s.provenance.mask_i_index = i;
  s.provenance.mask_j_index = j;
  return s;
}

AugmentTransform draw_augmentation(Rng& rng, const AugmentParams& params, int height, int width, int crop_size) {
  if (height < crop_size || width < crop_size) throw DataError("frame smaller than the crop size");
  AugmentTransform t;
  t.crop_size = crop_size;
  std::vector<int> kinds{0};
  if (params.flip) kinds.push_back(1);
  if (params.rotate) kinds.push_back(2);
  if (params.translate_scale) kinds.push_back(3);
  const int kind = kinds.size() > 1 ? kinds[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(kinds.size())))] : 0;
  switch (kind) {
    case 1:
      t.flip = rng.bernoulli(0.5) ? FlipKind::horizontal : FlipKind::vertical;
      break;
    case 2:
      t.affine.rotation_deg = rng.symmetric(params.max_rotation_deg);
      break;
    case 3: {
      t.affine.dx = rng.symmetric(params.max_translation * width);
      t.affine.dy = rng.symmetric(params.max_translation * height);
      const double s = 1.0 + rng.symmetric(params.max_scale_delta);
      t.affine.sx = s;
      t.affine.sy = s;
      break;
    }
    default:
      break;
  }
  if (params.random_crop) {
    t.crop_y = rng.uniform_int(height - crop_size + 1);
    t.crop_x = rng.uniform_int(width - crop_size + 1);
  } else {
    t.crop_y = (height - crop_size) / 2;
    t.crop_x = (width - crop_size) / 2;
  }
  return t;
}

ImageFrame apply_augmentation(const ImageFrame& frame, const AugmentTransform& t) {
  ImageFrame out = frame;
  const int h = frame.height(), w = frame.width();
  if (t.flip == FlipKind::horizontal) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out(y, x) = frame(y, w - 1 - x);
    }
  } else if (t.flip == FlipKind::vertical) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out(y, x) = frame(h - 1 - y, x);
    }
  }
  out = warp(out, t.affine);
  if (t.crop_size == h && t.crop_size == w) return out;
  return crop(out, t.crop_y, t.crop_x, t.crop_size, t.crop_size);
}

std::pair<TrainSample, ImageFrame> augment(TrainSample sample, ImageFrame gt, Rng& rng, const AugmentParams& params,
                                           int crop_size) {
  require_same_shape(sample.live, sample.mask_i, "augment");
  require_same_shape(sample.live, sample.mask_j, "augment");
  require_same_shape(sample.live, sample.weak_label, "augment");
  if (!gt.empty()) require_same_shape(sample.live, gt, "augment");
  const AugmentTransform t = draw_augmentation(rng, params, sample.live.height(), sample.live.width(), crop_size);
  sample.mask_i = apply_augmentation(sample.mask_i, t);
  sample.mask_j = apply_augmentation(sample.mask_j, t);
  sample.live = apply_augmentation(sample.live, t);
  sample.weak_label = apply_augmentation(sample.weak_label, t);
  if (!gt.empty()) gt = apply_augmentation(gt, t);
  return {std::move(sample), std::move(gt)};
}

namespace {

template <typename T>
FeatureMap<T> stack_inputs(const std::vector<TrainSample>& batch, bool second_mask, int channels) {
  const ImageFrame& first = batch.front().live;
  const int n = static_cast<int>(batch.size());
  FeatureMap<T> in(channels, n, first.height(), first.width());
  const std::size_t plane = in.plane();
  for (int b = 0; b < n; ++b) {
    const TrainSample& s = batch[static_cast<std::size_t>(b)];
    require_same_shape(first, s.live, "training batch");
    const ImageFrame& mask = second_mask ? s.mask_j : s.mask_i;
    T* live_dst = in.channel(channels - 1) + b * plane;
    std::copy(s.live.data(), s.live.data() + plane, live_dst);
    if (channels == 2) {
      require_same_shape(s.live, mask, "training batch");
      std::copy(mask.data(), mask.data() + plane, in.channel(0) + b * plane);
    }
  }
  return in;
}

template <typename T>
inline T sign_of(T d) {
  return static_cast<T>((d > T(0)) - (d < T(0)));
}

}  // namespace

template <typename T>
LossEvaluation<T> loss_and_gradient(const Network<T>& net, const std::vector<TrainSample>& batch,
                                    const LossConfig& cfg, bool live_only, std::span<T> grad) {
  if (batch.empty()) throw ArgumentError("training batch is empty");
  cfg.validate();
  const int channels = live_only ? 1 : 2;
  if (net.arch().input_channels != channels) {
    throw ConfigError(live_only ? "live-only training needs a one-channel network"
                                : "mask+live training needs a two-channel network");
  }
  if (!grad.empty() && grad.size() != net.parameter_count()) throw ArgumentError("gradient buffer size mismatch");
  const bool want_grad = !grad.empty();
  const int n = static_cast<int>(batch.size());

  LossEvaluation<T> ev;
  NetworkTape<T> tape_i, tape_j;
  const std::uint64_t hash = net.parameter_hash();
  ev.v_i = net.forward(stack_inputs<T>(batch, false, channels), want_grad ? &tape_i : nullptr);
  if (!live_only) {
    if (net.parameter_hash() != hash) throw Error("parameters changed between the two branch forwards");
    ev.v_j = net.forward(stack_inputs<T>(batch, true, channels), want_grad ? &tape_j : nullptr);
  }

  const std::size_t plane = ev.v_i.plane();
  const double count = static_cast<double>(plane) * n;
  const T lam = static_cast<T>(cfg.lambda);
  const T fid_w = static_cast<T>(live_only ? (1.0 - cfg.lambda) : (1.0 - cfg.lambda) / 2.0) / static_cast<T>(count);
  const T con_w = lam / static_cast<T>(count);
  FeatureMap<T> g_i, g_j;
  if (want_grad) {
    g_i = FeatureMap<T>(1, n, ev.v_i.height, ev.v_i.width);
    if (!live_only) g_j = FeatureMap<T>(1, n, ev.v_i.height, ev.v_i.width);
  }
  double fid1 = 0.0, fid2 = 0.0, con = 0.0;
  ev.sample_con.assign(static_cast<std::size_t>(n), 0.0);
  for (int b = 0; b < n; ++b) {
    const ImageFrame& label = batch[static_cast<std::size_t>(b)].weak_label;
    require_same_shape(batch[static_cast<std::size_t>(b)].live, label, "training batch");
    const T* vi = ev.v_i.values.data() + b * plane;
    const T* vj = live_only ? nullptr : ev.v_j.values.data() + b * plane;
    double sample_con = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      const T l = static_cast<T>(label.data()[p]);
      const T di = vi[p] - l;
      fid1 += std::abs(static_cast<double>(di));
      if (want_grad) g_i.values[b * plane + p] = fid_w * sign_of(di);
      if (!live_only) {
        const T dj = vj[p] - l;
        const T dc = vi[p] - vj[p];
        fid2 += std::abs(static_cast<double>(dj));
        sample_con += std::abs(static_cast<double>(dc));
        if (want_grad) {
          g_i.values[b * plane + p] += con_w * sign_of(dc);
          g_j.values[b * plane + p] = fid_w * sign_of(dj) - con_w * sign_of(dc);
        }
      }
    }
    con += sample_con;
    ev.sample_con[static_cast<std::size_t>(b)] = sample_con / static_cast<double>(plane);
  }
  ev.l_fid1 = fid1 / count;
  ev.l_fid2 = live_only ? ev.l_fid1 : fid2 / count;
  ev.l_con = live_only ? 0.0 : con / count;
  ev.l_total = total_loss(ev.l_fid1, ev.l_fid2, ev.l_con, cfg);

  if (want_grad) {
    net.backward(tape_i, g_i, grad);
    if (!live_only) net.backward(tape_j, g_j, grad);
  }
  return ev;
}

template LossEvaluation<float> loss_and_gradient<float>(const Network<float>&, const std::vector<TrainSample>&,
                                                        const LossConfig&, bool, std::span<float>);
template LossEvaluation<double> loss_and_gradient<double>(const Network<double>&, const std::vector<TrainSample>&,
                                                          const LossConfig&, bool, std::span<double>);

void adam_update(std::span<float> params, std::span<const float> grad, AdamState& state, const TrainConfig& cfg) {
  if (grad.size() != params.size()) throw ArgumentError("gradient size mismatch");
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const float step_size = static_cast<float>(cfg.learning_rate / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(cfg.adam_epsilon);
  float* m = state.m.data();
  float* v = state.v.data();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const float g = grad[k];
    m[k] = fb1 * m[k] + (1.0f - fb1) * g;
    v[k] = fb2 * v[k] + (1.0f - fb2) * g * g;
    params[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
  }
}

StepResult train_step(Network<float>& net, const std::vector<TrainSample>& batch, const TrainConfig& cfg,
                      AdamState& state, int step) {
  std::vector<float> grad(net.parameter_count(), 0.0f);
  StepResult r;
  r.evaluation = loss_and_gradient<float>(net, batch, cfg.loss, cfg.live_only, grad);
  r.record = TrainRecord{step, r.evaluation.l_fid1, r.evaluation.l_fid2, r.evaluation.l_con, r.evaluation.l_total, 0.0};
  if (!std::isfinite(r.record.l_total)) {
    throw DivergenceError("non-finite training loss", step);
  }
  for (float g : grad) {
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient", step);
  }
  adam_update(net.parameters(), grad, state, cfg);
  return r;
}

DivergenceGuard::DivergenceGuard(int reference_step, double factor, int patience)
    : reference_step_(reference_step), factor_(factor), patience_(patience) {}

void DivergenceGuard::observe(int step, double l_total) {
  if (!std::isfinite(l_total)) {
    throw DivergenceError("non-finite training loss", step);
  }
  if (step == reference_step_) reference_ = l_total;
  if (reference_ < 0.0 || step <= reference_step_) return;
  over_ = l_total > factor_ * reference_ ? over_ + 1 : 0;
  if (over_ >= patience_) {
    throw DivergenceError("training loss stayed above " + std::to_string(factor_) + "x its step-" +
                              std::to_string(reference_step_) + " value for " + std::to_string(patience_) + " steps",
                          step);
  }
}

void write_train_log_header(std::ostream& out) { out << "step,L_fid1,L_fid2,L_con,L_total,wall_ms\n"; }

void write_train_log_row(std::ostream& out, const TrainRecord& r) {
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g,%.3f\n", r.step, r.l_fid1, r.l_fid2, r.l_con,
                r.l_total, r.wall_ms);
  out << line;
}

// Background loader: batches are pure functions of the step number, so the
// queue only changes timing, never content.
struct Trainer::Prefetcher {
  Prefetcher(const Trainer& trainer, int first, int last) : next_(first) {
    worker_ = std::thread([this, &trainer, last] {
      for (int s = next_; s <= last; ++s) {
        auto batch = trainer.draw_batch(s);
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || queue_.size() < kDepth; });
        if (stop_) return;
        queue_.emplace_back(s, std::move(batch));
        cv_.notify_all();
      }
    });
  }
  ~Prefetcher() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }
  std::vector<BatchItem> pop(int step) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !queue_.empty(); });
    auto [s, batch] = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    if (s != step) throw Error("prefetch queue out of order");
    return std::move(batch);
  }

  static constexpr std::size_t kDepth = 4;
  int next_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::pair<int, std::vector<BatchItem>>> queue_;
  bool stop_ = false;
  std::thread worker_;
};

Trainer::Trainer(Network<float>& net, const std::vector<DSASequence>& data, TrainConfig cfg)
    : net_(net), data_(data), cfg_(std::move(cfg)), bank_(cfg_.mdss.bank_capacity) {
  cfg_.validate();
  cfg_.mdss = cfg_.mdss.resolved(cfg_.total_steps);
  if (data_.empty()) throw DataError("training set is empty");
  for (std::size_t s = 0; s < data_.size(); ++s) {
    if (data_[s].masks.size() < 2) throw DataError("sequence " + data_[s].id + " has fewer than two masks");
    for (std::size_t t = 0; t < data_[s].lives.size(); ++t) index_.emplace_back(static_cast<int>(s), static_cast<int>(t));
  }
  if (index_.empty()) throw DataError("training set has no live frames");
  adam_.reset(net_.parameter_count());
}

Trainer::~Trainer() = default;

std::vector<BatchItem> Trainer::draw_batch(int step) const {
  const std::size_t n = index_.size();
  std::map<std::size_t, std::vector<std::size_t>> perms;
  auto order = [&](std::size_t epoch) -> const std::vector<std::size_t>& {
    auto it = perms.find(epoch);
    if (it != perms.end()) return it->second;
    std::vector<std::size_t> p(n);
    for (std::size_t k = 0; k < n; ++k) p[k] = k;
    Rng rng(derive_seed(cfg_.seed, "epoch", {epoch}));
    for (std::size_t k = n; k > 1; --k) std::swap(p[k - 1], p[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(k)))]);
    return perms.emplace(epoch, std::move(p)).first->second;
  };
  std::vector<BatchItem> items;
  items.reserve(static_cast<std::size_t>(cfg_.batch_size));
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const std::size_t pos = static_cast<std::size_t>(step - 1) * cfg_.batch_size + b;
    const auto [si, li] = index_[order(pos / n)[pos % n]];
    const DSASequence& seq = data_[static_cast<std::size_t>(si)];
    Rng sample_rng(derive_seed(cfg_.seed, "sample", {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)}));
    TrainSample sample = make_train_sample(seq, li, sample_rng);
    Rng aug_rng(derive_seed(cfg_.seed, "augment", {static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)}));
    auto [s, gt] = augment(std::move(sample), seq.vessels_gt[static_cast<std::size_t>(li)], aug_rng, cfg_.augment,
                           cfg_.crop_size);
    items.push_back(BatchItem{std::move(s), std::move(gt)});
  }
  return items;
}

std::vector<BatchItem> Trainer::next_batch(int step) {
  if (prefetch_) return prefetch_->pop(step);
  return draw_batch(step);
}

TrainRecord Trainer::step() {
  const int s = step_ + 1;
  if (s > cfg_.total_steps) throw Error("training already completed");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<BatchItem> items = next_batch(s);
  std::vector<TrainSample> batch;
  batch.reserve(items.size());
  for (std::size_t b = 0; b < items.size(); ++b) {
    if (cfg_.mdss.enabled) {
      Rng mix_rng(derive_seed(cfg_.seed, "mixup", {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b)}));
      auto [sample, gt] = mixup_apply(std::move(items[b].sample), std::move(items[b].gt), bank_, mix_rng, cfg_.mdss);
      batch.push_back(std::move(sample));
    } else {
      batch.push_back(std::move(items[b].sample));
    }
  }
  StepResult r = train_step(net_, batch, cfg_, adam_, s);
  guard_.observe(s, r.record.l_total);

  if (cfg_.mdss.enabled && !cfg_.live_only) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (batch[b].provenance.mixup.applied) continue;
      const ImageFrame& ref = batch[b].live;
      ImageFrame pred(ref.height(), ref.width());
      const float* src = r.evaluation.v_i.values.data() + b * r.evaluation.v_i.plane();
      std::copy(src, src + pred.size(), pred.data());
      pred.clip();
      bank_update(bank_, pred, r.evaluation.sample_con[b], batch[b].provenance.sequence_id, s, cfg_.mdss);
      break;
    }
  }
  step_ = s;
  if (!cfg_.deterministic) {
    r.record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return r.record;
}

TrainResult Trainer::run(const TrainHooks& hooks) {
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  if (!cfg_.deterministic && !prefetch_ && step_ < cfg_.total_steps) {
    prefetch_ = std::make_unique<Prefetcher>(*this, step_ + 1, cfg_.total_steps);
  }
  while (step_ < cfg_.total_steps) {
    const TrainRecord rec = step();
    result.records.push_back(rec);
    if (hooks.on_record) hooks.on_record(rec);
    if (hooks.on_checkpoint && cfg_.checkpoint_every > 0 && rec.step % cfg_.checkpoint_every == 0 &&
        rec.step != cfg_.total_steps) {
      hooks.on_checkpoint(rec.step, net_, adam_);
    }
  }
  prefetch_.reset();
  result.mdss = bank_.stats();
  result.bank_size = bank_.size();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.parameter_hash = net_.parameter_hash();
  return result;
}

}  // namespace vccdsa
