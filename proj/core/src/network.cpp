#include "vccdsa/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "vccdsa/error.hpp"
#include "vccdsa/rng.hpp"

namespace vccdsa {

int ArchConfig::scaled(int count) const {
  const int v = static_cast<int>(std::lround(count * scale_factor));
  if (v < 1) {
    throw ConfigError("channel count " + std::to_string(count) + " scales to " + std::to_string(v) +
                      " at scale_factor " + std::to_string(scale_factor));
  }
  return v;
}

void ArchConfig::validate() const {
  if (!(scale_factor > 0.0 && scale_factor <= 1.0)) throw ConfigError("scale_factor must lie in (0, 1]");
  if (input_channels != 1 && input_channels != 2) throw ConfigError("input_channels must be 1 or 2");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd and >= 1");
  if (rdb_layers < 2) throw ConfigError("rdb_layers must be >= 2");
  head_channels();
  for (int i = 0; i < 3; ++i) stage(i);
  growth();
}

ArchConfig ArchConfig::desk_scale() {
  ArchConfig a;
  a.scale_factor = 0.25;
  return a;
}

namespace {

struct LayerPlan {
  std::vector<ConvLayer> layers;
  std::array<DenseBlock, 3> blocks;
  std::size_t total = 0;
  std::size_t head, down1, down2, down3, up1, up2, up3, tail;
};

LayerPlan plan_layers(const ArchConfig& a) {
  a.validate();
  LayerPlan p;
  auto add = [&](std::string name, int in, int out, int stride, bool act) {
    ConvLayer l;
    l.name = std::move(name);
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = a.kernel;
    l.stride = stride;
    l.activation = act;
    l.weight_offset = p.total;
    p.total += l.weight_count();
    l.bias_offset = p.total;
    p.total += static_cast<std::size_t>(out);
    p.layers.push_back(std::move(l));
    return p.layers.size() - 1;
  };
  auto add_block = [&](int index, std::string name, int channels) {
    DenseBlock b;
    b.name = name;
    b.channels = channels;
    b.growth = a.growth();
    b.layers = a.rdb_layers;
    b.first_layer = p.layers.size();
    for (int i = 0; i < a.rdb_layers - 1; ++i) {
      add(name + ".conv" + std::to_string(i + 1), channels + i * b.growth, b.growth, 1, true);
    }
    add(name + ".conv" + std::to_string(a.rdb_layers), b.dense_channels(), channels, 1, false);
    p.blocks[static_cast<std::size_t>(index)] = std::move(b);
  };

  const int c0 = a.head_channels();
  const int c1 = a.stage(0), c2 = a.stage(1), c3 = a.stage(2);
  // Decoder widths mirror the encoder: c3 -> c2 -> c1 -> c0.
  const int u1 = c2, u2 = c1, u3 = c0;
  p.head = add("head", a.input_channels, c0, 1, true);
  p.down1 = add("down1", c0, c1, 2, true);
  p.down2 = add("down2", c1, c2, 2, true);
  add_block(0, "rdb1", c2);
  add_block(1, "rdb2", c2);
  p.down3 = add("down3", c2, c3, 2, true);
  p.up1 = add("up1", c3, u1, 1, true);
  const int cat1 = u1 + c0 + c2;
  add_block(2, "rdb3", cat1);
  p.up2 = add("up2", cat1, u2, 1, true);
  const int cat2 = u2 + c0;
  p.up3 = add("up3", cat2, u3, 1, true);
  const int cat3 = u3 + c0;
  p.tail = add("tail", cat3, 1, 1, false);
  return p;
}

template <typename T>
ops::Workspace<T>& workspace() {
  static thread_local ops::Workspace<T> ws;
  return ws;
}

template <typename T>
void copy_channels(const FeatureMap<T>& src, FeatureMap<T>& dst, int dst_channel) {
  std::copy(src.values.begin(), src.values.end(), dst.channel(dst_channel));
}

template <typename T>
void add_channels(const FeatureMap<T>& src, int src_channel, int count, FeatureMap<T>& dst) {
  const T* s = src.channel(src_channel);
  const std::size_t n = static_cast<std::size_t>(count) * src.channel_stride();
  for (std::size_t i = 0; i < n; ++i) dst.values[i] += s[i];
}

template <typename T>
std::span<T> channel_span(FeatureMap<T>& f, int first, int count) {
  return {f.channel(first), static_cast<std::size_t>(count) * f.channel_stride()};
}

template <typename T>
std::span<const T> channel_span(const FeatureMap<T>& f, int first, int count) {
  return {f.channel(first), static_cast<std::size_t>(count) * f.channel_stride()};
}

}  // namespace

std::size_t count_parameters(const ArchConfig& arch) { return plan_layers(arch).total; }

int tail_input_channels(const ArchConfig& arch) {
  const LayerPlan p = plan_layers(arch);
  return p.layers[p.tail].in_channels;
}

template <typename T>
Network<T>::Network(const ArchConfig& arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
  LayerPlan plan = plan_layers(arch);
  layers_ = std::move(plan.layers);
  blocks_ = std::move(plan.blocks);
  head_ = plan.head;
  down1_ = plan.down1;
  down2_ = plan.down2;
  down3_ = plan.down3;
  up1_ = plan.up1;
  up2_ = plan.up2;
  up3_ = plan.up3;
  tail_ = plan.tail;
  params_.assign(plan.total, T(0));
  // Fan-in scaled uniform weights U(+-1/sqrt(fan_in)) (the usual framework
  // default for convolutions), zero biases; one stream per layer. The He bound
  // sqrt(6/fan_in) trained markedly slower on the desk-scale fixture.
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const ConvLayer& l = layers_[li];
    Rng rng(derive_seed(seed, "init", {static_cast<std::uint64_t>(li)}));
    const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
    const double bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < l.weight_count(); ++i) {
      params_[l.weight_offset + i] = static_cast<T>(rng.symmetric(bound));
    }
  }
}

template <typename T>
const ConvLayer& Network<T>::layer(std::string_view name) const {
  for (const ConvLayer& l : layers_) {
    if (l.name == name) return l;
  }
  throw ArgumentError("unknown layer " + std::string(name));
}

template <typename T>
std::span<T> Network<T>::weights(std::string_view name) {
  const ConvLayer& l = layer(name);
  return std::span<T>(params_).subspan(l.weight_offset, l.weight_count());
}

template <typename T>
std::span<T> Network<T>::bias(std::string_view name) {
  const ConvLayer& l = layer(name);
  return std::span<T>(params_).subspan(l.bias_offset, static_cast<std::size_t>(l.out_channels));
}

template <typename T>
int Network<T>::tail_input_channels() const {
  return layers_[tail_].in_channels;
}

template <typename T>
std::uint64_t Network<T>::parameter_hash() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
  const std::size_t n = params_.size() * sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void Network<T>::conv(const ConvLayer& l, const T* in, int n, int h, int w, T* out) const {
  ops::conv2d_forward(in, l.in_channels, n, h, w, params_.data() + l.weight_offset, params_.data() + l.bias_offset,
                      l.out_channels, l.kernel, l.stride, out, workspace<T>());
  if (l.activation) {
    const int ho = ops::conv_out_size(h, l.kernel, l.stride), wo = ops::conv_out_size(w, l.kernel, l.stride);
    ops::relu_inplace(std::span<T>(out, static_cast<std::size_t>(l.out_channels) * n * ho * wo));
  }
}

template <typename T>
void Network<T>::conv_back(const ConvLayer& l, const T* in, int n, int h, int w, const T* grad_out, T* grad_in,
                           std::span<T> grad) const {
  ops::conv2d_backward(in, l.in_channels, n, h, w, params_.data() + l.weight_offset, l.out_channels, l.kernel,
                       l.stride, grad_out, grad.data() + l.weight_offset, grad.data() + l.bias_offset, grad_in,
                       workspace<T>());
}

template <typename T>
FeatureMap<T> Network<T>::rdb_forward(int block, const FeatureMap<T>& features, DenseBlockTape<T>* tape) const {
  const DenseBlock& b = blocks_.at(static_cast<std::size_t>(block));
  if (features.channels != b.channels) {
    throw ConfigError(b.name + ": expected " + std::to_string(b.channels) + " input channels, got " +
                      std::to_string(features.channels));
  }
  DenseBlockTape<T> local;
  DenseBlockTape<T>& t = tape ? *tape : local;
  const int n = features.batch, h = features.height, w = features.width;
  t.dense = FeatureMap<T>(b.dense_channels(), n, h, w);
  copy_channels(features, t.dense, 0);
  for (int i = 0; i < b.layers - 1; ++i) {
    conv(layers_[b.first_layer + static_cast<std::size_t>(i)], t.dense.values.data(), n, h, w,
         t.dense.channel(b.channels + i * b.growth));
  }
  t.output = FeatureMap<T>(b.channels, n, h, w);
  conv(layers_[b.first_layer + static_cast<std::size_t>(b.layers - 1)], t.dense.values.data(), n, h, w,
       t.output.values.data());
  for (std::size_t i = 0; i < t.output.values.size(); ++i) t.output.values[i] += features.values[i];
  return t.output;
}

template <typename T>
FeatureMap<T> Network<T>::rdb_backward(int block, const DenseBlockTape<T>& t, const FeatureMap<T>& grad_output,
                                       std::span<T> grad) const {
  const DenseBlock& b = blocks_.at(static_cast<std::size_t>(block));
  const int n = t.dense.batch, h = t.dense.height, w = t.dense.width;
  FeatureMap<T> g_dense(b.dense_channels(), n, h, w);
  conv_back(layers_[b.first_layer + static_cast<std::size_t>(b.layers - 1)], t.dense.values.data(), n, h, w,
            grad_output.values.data(), g_dense.values.data(), grad);
  for (int i = b.layers - 2; i >= 0; --i) {
    const int first = b.channels + i * b.growth;
    ops::relu_backward(channel_span(g_dense, first, b.growth), channel_span(t.dense, first, b.growth));
    conv_back(layers_[b.first_layer + static_cast<std::size_t>(i)], t.dense.values.data(), n, h, w,
              g_dense.channel(first), g_dense.values.data(), grad);
  }
  FeatureMap<T> g_in = grad_output;
  add_channels(g_dense, 0, b.channels, g_in);
  return g_in;
}

template <typename T>
FeatureMap<T> Network<T>::forward(const FeatureMap<T>& input, NetworkTape<T>* tape) const {
  if (input.channels != arch_.input_channels) {
    throw ArgumentError("network expects " + std::to_string(arch_.input_channels) + " input channels, got " +
                        std::to_string(input.channels));
  }
  const int n = input.batch, H = input.height, W = input.width;
  if (n < 1 || H < 8 || W < 8 || H % 8 != 0 || W % 8 != 0) {
    throw ArgumentError("network input must be non-empty with H, W divisible by 8");
  }
  NetworkTape<T> local;
  NetworkTape<T>& t = tape ? *tape : local;
  const ConvLayer& head = layers_[head_];
  const ConvLayer& up1 = layers_[up1_];
  const ConvLayer& up2 = layers_[up2_];
  const ConvLayer& up3 = layers_[up3_];
  const int c0 = head.out_channels;

  t.input = input;
  t.head = FeatureMap<T>(c0, n, H, W);
  conv(head, input.values.data(), n, H, W, t.head.values.data());
  t.down1 = FeatureMap<T>(layers_[down1_].out_channels, n, H / 2, W / 2);
  conv(layers_[down1_], t.head.values.data(), n, H, W, t.down1.values.data());
  t.down2 = FeatureMap<T>(layers_[down2_].out_channels, n, H / 4, W / 4);
  conv(layers_[down2_], t.down1.values.data(), n, H / 2, W / 2, t.down2.values.data());
  rdb_forward(0, t.down2, &t.rdb1);
  rdb_forward(1, t.rdb1.output, &t.rdb2);
  t.down3 = FeatureMap<T>(layers_[down3_].out_channels, n, H / 8, W / 8);
  conv(layers_[down3_], t.rdb2.output.values.data(), n, H / 4, W / 4, t.down3.values.data());

  t.up1_in = FeatureMap<T>(t.down3.channels, n, H / 4, W / 4);
  ops::upsample2(t.down3.values.data(), t.down3.channels, n, H / 8, W / 8, t.up1_in.values.data());
  t.cat1 = FeatureMap<T>(up1.out_channels + c0 + t.rdb1.output.channels, n, H / 4, W / 4);
  conv(up1, t.up1_in.values.data(), n, H / 4, W / 4, t.cat1.values.data());
  ops::avg_pool(t.head.values.data(), c0, n, H, W, 4, t.cat1.channel(up1.out_channels));
  copy_channels(t.rdb1.output, t.cat1, up1.out_channels + c0);
  rdb_forward(2, t.cat1, &t.rdb3);

  t.up2_in = FeatureMap<T>(t.rdb3.output.channels, n, H / 2, W / 2);
  ops::upsample2(t.rdb3.output.values.data(), t.rdb3.output.channels, n, H / 4, W / 4, t.up2_in.values.data());
  t.cat2 = FeatureMap<T>(up2.out_channels + c0, n, H / 2, W / 2);
  conv(up2, t.up2_in.values.data(), n, H / 2, W / 2, t.cat2.values.data());
  ops::avg_pool(t.head.values.data(), c0, n, H, W, 2, t.cat2.channel(up2.out_channels));

  t.up3_in = FeatureMap<T>(t.cat2.channels, n, H, W);
  ops::upsample2(t.cat2.values.data(), t.cat2.channels, n, H / 2, W / 2, t.up3_in.values.data());
  t.cat3 = FeatureMap<T>(up3.out_channels + c0, n, H, W);
  conv(up3, t.up3_in.values.data(), n, H, W, t.cat3.values.data());
  copy_channels(t.head, t.cat3, up3.out_channels);

  FeatureMap<T> out(1, n, H, W);
  conv(layers_[tail_], t.cat3.values.data(), n, H, W, out.values.data());
  return out;
}

template <typename T>
void Network<T>::backward(const NetworkTape<T>& t, const FeatureMap<T>& grad_output, std::span<T> grad) const {
  if (grad.size() != params_.size()) throw ArgumentError("gradient buffer size mismatch");
  const int n = t.input.batch, H = t.input.height, W = t.input.width;
  const ConvLayer& up1 = layers_[up1_];
  const ConvLayer& up2 = layers_[up2_];
  const ConvLayer& up3 = layers_[up3_];
  const int c0 = t.head.channels;

  FeatureMap<T> g_head(c0, n, H, W);

  FeatureMap<T> g_cat3(t.cat3.channels, n, H, W);
  conv_back(layers_[tail_], t.cat3.values.data(), n, H, W, grad_output.values.data(), g_cat3.values.data(), grad);
  add_channels(g_cat3, up3.out_channels, c0, g_head);
  ops::relu_backward(channel_span(g_cat3, 0, up3.out_channels), channel_span(t.cat3, 0, up3.out_channels));

  FeatureMap<T> g_up3_in(t.up3_in.channels, n, H, W);
  conv_back(up3, t.up3_in.values.data(), n, H, W, g_cat3.values.data(), g_up3_in.values.data(), grad);
  FeatureMap<T> g_cat2(t.cat2.channels, n, H / 2, W / 2);
  ops::upsample2_backward(g_up3_in.values.data(), t.cat2.channels, n, H / 2, W / 2, g_cat2.values.data());
  ops::avg_pool_backward(g_cat2.channel(up2.out_channels), c0, n, H, W, 2, g_head.values.data());
  ops::relu_backward(channel_span(g_cat2, 0, up2.out_channels), channel_span(t.cat2, 0, up2.out_channels));

  FeatureMap<T> g_up2_in(t.up2_in.channels, n, H / 2, W / 2);
  conv_back(up2, t.up2_in.values.data(), n, H / 2, W / 2, g_cat2.values.data(), g_up2_in.values.data(), grad);
  FeatureMap<T> g_r3(t.rdb3.output.channels, n, H / 4, W / 4);
  ops::upsample2_backward(g_up2_in.values.data(), g_r3.channels, n, H / 4, W / 4, g_r3.values.data());

  FeatureMap<T> g_cat1 = rdb_backward(2, t.rdb3, g_r3, grad);
  ops::avg_pool_backward(g_cat1.channel(up1.out_channels), c0, n, H, W, 4, g_head.values.data());
  FeatureMap<T> g_r1(t.rdb1.output.channels, n, H / 4, W / 4);
  add_channels(g_cat1, up1.out_channels + c0, g_r1.channels, g_r1);
  ops::relu_backward(channel_span(g_cat1, 0, up1.out_channels), channel_span(t.cat1, 0, up1.out_channels));

  FeatureMap<T> g_up1_in(t.up1_in.channels, n, H / 4, W / 4);
  conv_back(up1, t.up1_in.values.data(), n, H / 4, W / 4, g_cat1.values.data(), g_up1_in.values.data(), grad);
  FeatureMap<T> g_d3(t.down3.channels, n, H / 8, W / 8);
  ops::upsample2_backward(g_up1_in.values.data(), g_d3.channels, n, H / 8, W / 8, g_d3.values.data());
  ops::relu_backward(std::span<T>(g_d3.values), std::span<const T>(t.down3.values));

  FeatureMap<T> g_r2(t.rdb2.output.channels, n, H / 4, W / 4);
  conv_back(layers_[down3_], t.rdb2.output.values.data(), n, H / 4, W / 4, g_d3.values.data(),
            g_r2.values.data(), grad);
  const FeatureMap<T> g_r1b = rdb_backward(1, t.rdb2, g_r2, grad);
  for (std::size_t i = 0; i < g_r1.values.size(); ++i) g_r1.values[i] += g_r1b.values[i];
  FeatureMap<T> g_d2 = rdb_backward(0, t.rdb1, g_r1, grad);
  ops::relu_backward(std::span<T>(g_d2.values), std::span<const T>(t.down2.values));

  FeatureMap<T> g_d1(t.down1.channels, n, H / 2, W / 2);
  conv_back(layers_[down2_], t.down1.values.data(), n, H / 2, W / 2, g_d2.values.data(), g_d1.values.data(), grad);
  ops::relu_backward(std::span<T>(g_d1.values), std::span<const T>(t.down1.values));
  conv_back(layers_[down1_], t.head.values.data(), n, H, W, g_d1.values.data(), g_head.values.data(), grad);
  ops::relu_backward(std::span<T>(g_head.values), std::span<const T>(t.head.values));
  conv_back(layers_[head_], t.input.values.data(), n, H, W, g_head.values.data(), nullptr, grad);
}

template class Network<float>;
template class Network<double>;

Network<float> build_network(const ArchConfig& arch, std::uint64_t seed) { return Network<float>(arch, seed); }

namespace {

ImageFrame to_frame(const FeatureMap<float>& out) {
  ImageFrame frame(out.height, out.width);
  std::copy(out.values.begin(), out.values.begin() + static_cast<std::ptrdiff_t>(out.plane()), frame.data());
  return frame;
}

}  // namespace

ImageFrame forward(const Network<float>& net, const ImageFrame& mask, const ImageFrame& live) {
  require_same_shape(mask, live, "forward");
  if (net.arch().input_channels != 2) throw ArgumentError("forward: network is not a mask+live network");
  FeatureMap<float> in(2, 1, live.height(), live.width());
  std::copy(mask.values().begin(), mask.values().end(), in.channel(0));
  std::copy(live.values().begin(), live.values().end(), in.channel(1));
  return to_frame(net.forward(in));
}

ImageFrame forward_live_only(const Network<float>& net, const ImageFrame& live) {
  if (live.empty()) throw ArgumentError("forward_live_only: empty frame");
  if (net.arch().input_channels != 1) throw ArgumentError("forward_live_only: network expects 2 inputs");
  FeatureMap<float> in(1, 1, live.height(), live.width());
  std::copy(live.values().begin(), live.values().end(), in.channel(0));
  return to_frame(net.forward(in));
}

ImageFrame predict(const Network<float>& net, const ImageFrame& mask, const ImageFrame& live) {
  return net.arch().input_channels == 1 ? forward_live_only(net, live) : forward(net, mask, live);
}

}  // namespace vccdsa
