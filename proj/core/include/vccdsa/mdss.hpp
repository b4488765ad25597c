#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "vccdsa/image.hpp"
#include "vccdsa/rng.hpp"
#include "vccdsa/sample.hpp"

namespace vccdsa {

struct MdssConfig {
  bool enabled = true;
  int bank_capacity = 256;
  int warmup_steps = -1;  // < 0: 20% of the run's total steps
  double mix_probability = 0.5;
  int insert_every = 10;
  double quality_gate = 0.02;  // max per-sample L_con of an inserted prediction

  void validate() const;
  // Copy with warmup_steps filled in for a run of `total_steps`.
  MdssConfig resolved(int total_steps) const;
};

struct BankEntry {
  std::uint64_t id = 0;
  std::string source_sequence;
  int step = 0;
  ImageFrame frame;
};

struct MdssStats {
  std::uint64_t inserts = 0;
  std::uint64_t rejections = 0;
  std::uint64_t evictions = 0;
  std::uint64_t mixes = 0;
};

// Bounded FIFO store with one writer and snapshot readers.
class VascularBank {
 public:
  using Snapshot = std::shared_ptr<const std::vector<BankEntry>>;

  explicit VascularBank(int capacity);

  int capacity() const noexcept { return capacity_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  // Consistent view of the entries, oldest first.
  Snapshot snapshot() const;

  // Appends a clipped copy of `frame`; evicts the oldest entry at capacity.
  std::uint64_t insert(const ImageFrame& frame, std::string source_sequence, int step);
  void count_rejection();
  void count_mix() const;

  MdssStats stats() const;

 private:
  int capacity_;
  mutable std::mutex mutex_;
  Snapshot entries_;
  std::uint64_t next_id_ = 0;
  mutable MdssStats stats_;
};

// Inserts when step >= warmup, step % insert_every == 0 and l_con <= gate.
// Returns true when the prediction entered the bank.
bool bank_update(VascularBank& bank, const ImageFrame& prediction, double l_con, const std::string& source_sequence,
                 int step, const MdssConfig& cfg);

// Vascular mixup: adds one bank entry from another sequence, at unit gain and
// with clipping, to live, weak label and ground truth. Masks are untouched.
std::pair<TrainSample, ImageFrame> mixup_apply(TrainSample sample, ImageFrame gt, const VascularBank& bank, Rng& rng,
                                               const MdssConfig& cfg);

// entry_####.png (16-bit) plus index.json with id, source and insertion step.
void export_bank_snapshot(const VascularBank& bank, const std::filesystem::path& dir);

}  // namespace vccdsa
