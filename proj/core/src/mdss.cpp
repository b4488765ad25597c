#include "vccdsa/mdss.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "vccdsa/error.hpp"
#include "vccdsa/png_io.hpp"

namespace vccdsa {

void MdssConfig::validate() const {
  if (bank_capacity < 1) throw ConfigError("mdss bank_capacity must be >= 1");
  if (!(mix_probability >= 0.0 && mix_probability <= 1.0)) throw ConfigError("mdss mix_probability must lie in [0, 1]");
  if (insert_every < 1) throw ConfigError("mdss insert_every must be >= 1");
  if (!(quality_gate >= 0.0)) throw ConfigError("mdss quality_gate must be >= 0");
}

MdssConfig MdssConfig::resolved(int total_steps) const {
  MdssConfig c = *this;
  if (c.warmup_steps < 0) c.warmup_steps = total_steps / 5;
  return c;
}

VascularBank::VascularBank(int capacity)
    : capacity_(capacity), entries_(std::make_shared<const std::vector<BankEntry>>()) {
  if (capacity < 1) throw ConfigError("bank capacity must be >= 1");
}

std::size_t VascularBank::size() const {
  std::lock_guard lock(mutex_);
  return entries_->size();
}

VascularBank::Snapshot VascularBank::snapshot() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::uint64_t VascularBank::insert(const ImageFrame& frame, std::string source_sequence, int step) {
  std::lock_guard lock(mutex_);
  auto next = std::make_shared<std::vector<BankEntry>>();
  const bool full = entries_->size() >= static_cast<std::size_t>(capacity_);
  next->reserve(std::min(entries_->size() + 1, static_cast<std::size_t>(capacity_)));
  next->insert(next->end(), entries_->begin() + (full ? 1 : 0), entries_->end());
  const std::uint64_t id = next_id_++;
  next->push_back(BankEntry{id, std::move(source_sequence), step, clipped(frame)});
  entries_ = std::move(next);
  ++stats_.inserts;
  if (full) ++stats_.evictions;
  return id;
}

void VascularBank::count_rejection() {
  std::lock_guard lock(mutex_);
  ++stats_.rejections;
}

void VascularBank::count_mix() const {
  std::lock_guard lock(mutex_);
  ++stats_.mixes;
}

MdssStats VascularBank::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

bool bank_update(VascularBank& bank, const ImageFrame& prediction, double l_con, const std::string& source_sequence,
                 int step, const MdssConfig& cfg) {
  if (!cfg.enabled) return false;
  if (step < std::max(cfg.warmup_steps, 0) || step % cfg.insert_every != 0) return false;
  if (!(l_con <= cfg.quality_gate)) {
    bank.count_rejection();
    return false;
  }
  bank.insert(prediction, source_sequence, step);
  return true;
}

std::pair<TrainSample, ImageFrame> mixup_apply(TrainSample sample, ImageFrame gt, const VascularBank& bank, Rng& rng,
                                               const MdssConfig& cfg) {
  if (!cfg.enabled) return {std::move(sample), std::move(gt)};
  const auto entries = bank.snapshot();
  if (entries->empty() || !rng.bernoulli(cfg.mix_probability)) return {std::move(sample), std::move(gt)};
  std::vector<const BankEntry*> eligible;
  for (const auto& e : *entries) {
    if (e.source_sequence != sample.provenance.sequence_id && e.frame.same_shape(sample.live)) eligible.push_back(&e);
  }
  if (eligible.empty()) return {std::move(sample), std::move(gt)};
  const BankEntry& q = *eligible[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(eligible.size())))];
  auto add = [&](ImageFrame& f) {
    require_same_shape(f, q.frame, "mixup_apply");
    auto dst = f.values();
    const auto src = q.frame.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp(dst[i] + src[i], 0.0f, 1.0f);
  };
  add(sample.live);
  add(sample.weak_label);
  if (!gt.empty()) add(gt);
  sample.provenance.mixup = MixupRecord{true, q.id, q.source_sequence};
  bank.count_mix();
  return {std::move(sample), std::move(gt)};
}

void export_bank_snapshot(const VascularBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto entries = bank.snapshot();
  nlohmann::json index = nlohmann::json::array();
  for (const auto& e : *entries) {
    char name[32];
    std::snprintf(name, sizeof(name), "entry_%04llu.png", static_cast<unsigned long long>(e.id));
    write_png16(dir / name, e.frame);
    index.push_back({{"id", e.id}, {"file", name}, {"source_sequence", e.source_sequence}, {"step", e.step}});
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write bank index in " + dir.string());
  out << nlohmann::json{{"capacity", bank.capacity()}, {"entries", index}}.dump(2) << '\n';
}

}  // namespace vccdsa
