#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vccdsa/image.hpp"
#include "vccdsa/tensor.hpp"

namespace vccdsa {

// Channel plan of the reconstruction network. Counts are the full-size
// values; scale_factor multiplies every one of them for desk-scale runs.
struct ArchConfig {
  int input_channels = 2;  // 2 = (mask, live); 1 = live-only ablation
  int base_channels = 32;
  std::array<int, 3> stage_channels{64, 128, 128};
  int rdb_layers = 5;
  int rdb_growth = 224;
  int kernel = 3;
  double scale_factor = 1.0;

  // round(count * scale_factor); throws ConfigError when the result is < 1.
  int scaled(int count) const;
  void validate() const;

  int head_channels() const { return scaled(base_channels); }
  int stage(int i) const { return scaled(stage_channels.at(static_cast<std::size_t>(i))); }
  int growth() const { return scaled(rdb_growth); }

  // Desk-scale reference network (scale 0.25).
  static ArchConfig desk_scale();
};

struct ConvLayer {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  bool activation = true;  // rectifier after the convolution
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
  std::size_t parameter_count() const { return weight_count() + static_cast<std::size_t>(out_channels); }
};

// Residual dense block: layers[0..L-2] grow the dense stack by `growth`
// channels each (with activation); the last layer fuses the full stack back
// to `channels` (no activation) and the block input is added.
struct DenseBlock {
  std::string name;
  int channels = 0;
  int growth = 0;
  std::size_t first_layer = 0;  // index into Network::layers()
  int layers = 0;

  int dense_channels() const { return channels + (layers - 1) * growth; }
};

template <typename T>
struct DenseBlockTape {
  FeatureMap<T> dense;  // block input followed by the growth layer outputs
  FeatureMap<T> output;
};

// Activations retained by a training forward pass for the backward pass.
template <typename T>
struct NetworkTape {
  FeatureMap<T> input;
  FeatureMap<T> head;
  FeatureMap<T> down1;
  FeatureMap<T> down2;
  DenseBlockTape<T> rdb1;
  DenseBlockTape<T> rdb2;
  FeatureMap<T> down3;
  FeatureMap<T> up1_in;
  FeatureMap<T> cat1;  // [up1 | pool4(head) | rdb1]
  DenseBlockTape<T> rdb3;
  FeatureMap<T> up2_in;
  FeatureMap<T> cat2;  // [up2 | pool2(head)]
  FeatureMap<T> up3_in;
  FeatureMap<T> cat3;  // [up3 | head]
};

// RDB-based encoder/decoder with details-shortcut:
//   head -> down1 -> down2 -> rdb1 -> rdb2 -> down3 -> up1 -> [.|pool(head)|rdb1]
//   -> rdb3 -> up2 -> [.|pool(head)] -> up3 -> [.|head] -> tail
// All parameters live in one flat vector addressed through ConvLayer offsets.
template <typename T>
class Network {
 public:
  Network(const ArchConfig& arch, std::uint64_t seed);

  const ArchConfig& arch() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<T> parameters() noexcept { return params_; }
  std::span<const T> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  const std::vector<ConvLayer>& layers() const noexcept { return layers_; }
  const ConvLayer& layer(std::string_view name) const;
  std::span<T> weights(std::string_view name);
  std::span<T> bias(std::string_view name);

  const std::array<DenseBlock, 3>& blocks() const noexcept { return blocks_; }
  int tail_input_channels() const;

  // FNV-1a over the raw parameter bytes.
  std::uint64_t parameter_hash() const noexcept;

  // input: (input_channels, N, H, W) with H, W divisible by 8; returns (1, N, H, W).
  FeatureMap<T> forward(const FeatureMap<T>& input, NetworkTape<T>* tape = nullptr) const;

  // Accumulates d(loss)/d(params) into grad (same length as parameters()).
  void backward(const NetworkTape<T>& tape, const FeatureMap<T>& grad_output, std::span<T> grad) const;

  FeatureMap<T> rdb_forward(int block, const FeatureMap<T>& features, DenseBlockTape<T>* tape = nullptr) const;
  // Accumulates parameter gradients and returns d(loss)/d(block input).
  FeatureMap<T> rdb_backward(int block, const DenseBlockTape<T>& tape, const FeatureMap<T>& grad_output,
                             std::span<T> grad) const;

 private:
  void conv(const ConvLayer& l, const T* in, int n, int h, int w, T* out) const;
  void conv_back(const ConvLayer& l, const T* in, int n, int h, int w, const T* grad_out, T* grad_in,
                 std::span<T> grad) const;

  ArchConfig arch_;
  std::uint64_t seed_;
  std::vector<ConvLayer> layers_;
  std::array<DenseBlock, 3> blocks_;
  std::vector<T> params_;
  std::size_t head_, down1_, down2_, down3_, up1_, up2_, up3_, tail_;
};

// Parameter count as a pure function of the architecture.
std::size_t count_parameters(const ArchConfig& arch);
int tail_input_channels(const ArchConfig& arch);

Network<float> build_network(const ArchConfig& arch, std::uint64_t seed);

// Stacks (mask, live) as two channels of a batch-1 tensor and returns the
// single-channel prediction (unclipped).
ImageFrame forward(const Network<float>& net, const ImageFrame& mask, const ImageFrame& live);
// Live-only network (input_channels == 1).
ImageFrame forward_live_only(const Network<float>& net, const ImageFrame& live);

// Runs the network on the right input channels for its architecture.
ImageFrame predict(const Network<float>& net, const ImageFrame& mask, const ImageFrame& live);

}  // namespace vccdsa
