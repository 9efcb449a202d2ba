#pragma once

// 1D residual regression networks.
//
// Every variant shares one skeleton:
//   stem conv (K=7, stride 2) -> BN -> ReLU
//   downsampling conv (K=3, stride 2, to the first stage width) -> BN -> ReLU
//     (stands in for max-pool)
//   residual stages of basic blocks (two K=3 convs each; first block of every
//   stage after the first has stride 2; 1x1 strided conv + BN shortcut when the
//   shape changes)
//   global average pool -> linear(., 1)
//
// ResNet6 uses one block in each of two stages, so it has 2 residual blocks and
// 6 convolutions (shortcut 1x1 convs not counted).

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "octforce/error.hpp"
#include "octforce/ops.hpp"
#include "octforce/tensor.hpp"

namespace octforce {

enum class Variant { ResNet6, ResNet18, ResNet34 };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::ResNet6: return "ResNet6";
    case Variant::ResNet18: return "ResNet18";
    case Variant::ResNet34: return "ResNet34";
  }
  return "?";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "ResNet6" || name == "resnet6") return Variant::ResNet6;
  if (name == "ResNet18" || name == "resnet18") return Variant::ResNet18;
  if (name == "ResNet34" || name == "resnet34") return Variant::ResNet34;
  fail(ErrorKind::Config, "unknown architecture variant '" + std::string(name) + "'");
}

struct ArchSpec {
  Variant variant = Variant::ResNet6;
  std::size_t input_len = 1024;
  std::size_t stem_channels = 16;
  std::vector<std::size_t> block_counts;
  std::vector<std::size_t> stage_channels;

  static ArchSpec make(Variant variant, std::size_t input_len) {
    ArchSpec s;
    s.variant = variant;
    s.input_len = input_len;
    s.stem_channels = 16;
    switch (variant) {
      case Variant::ResNet6:
        s.block_counts = {1, 1};
        s.stage_channels = {16, 32};
        break;
      case Variant::ResNet18:
        s.block_counts = {2, 2, 2, 2};
        s.stage_channels = {16, 32, 64, 128};
        break;
      case Variant::ResNet34:
        s.block_counts = {3, 4, 6, 3};
        s.stage_channels = {16, 32, 64, 128};
        break;
    }
    return s;
  }

  std::size_t residual_blocks() const {
    std::size_t n = 0;
    for (auto c : block_counts) n += c;
    return n;
  }

  /// Stem + downsampling conv + two per block; 1x1 shortcuts excluded.
  std::size_t conv_layers() const { return 2 + 2 * residual_blocks(); }

  void validate() const {
    require(input_len == 1024 || input_len == 512, ErrorKind::Config,
            "input_len must be 1024 (raw) or 512 (reconstructed), got " + std::to_string(input_len));
    require(!block_counts.empty() && block_counts.size() == stage_channels.size(), ErrorKind::Config,
            "block_counts and stage_channels must be non-empty and of equal length");
    require(stem_channels > 0, ErrorKind::Config, "stem_channels must be positive");
    for (auto c : block_counts) require(c > 0, ErrorKind::Config, "every stage needs >= 1 block");
    for (auto c : stage_channels) require(c > 0, ErrorKind::Config, "stage width must be positive");
    if (variant == Variant::ResNet6)
      require(residual_blocks() == 2 && conv_layers() == 6, ErrorKind::Config,
              "ResNet6 must have 2 residual blocks and 6 conv layers");
  }
};

namespace detail {

inline nn::Tensor he_normal(nn::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> v(nn::numel(shape));
  for (double& x : v) x = dist(rng);
  return nn::Tensor(std::move(shape), std::move(v), true);
}

}  // namespace detail

/// Conv (no bias) followed by batch normalization.
struct ConvBn {
  nn::Tensor weight;
  nn::Tensor gamma;
  nn::Tensor beta;
  nn::RunningStats stats;
  std::size_t stride = 1;
  std::size_t padding = 0;

  ConvBn() = default;
  ConvBn(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride_,
         std::mt19937_64& rng)
      : weight(detail::he_normal({out_ch, in_ch, kernel}, in_ch * kernel, rng)),
        gamma(nn::Shape{out_ch}, 1.0, true),
        beta(nn::Shape{out_ch}, 0.0, true),
        stats(out_ch),
        stride(stride_),
        padding(kernel / 2) {}

  nn::Tensor forward(const nn::Tensor& x, nn::Mode mode) {
    return nn::batchnorm1d(nn::conv1d(x, weight, std::nullopt, stride, padding), gamma, beta, stats,
                           mode);
  }
};

struct BasicBlock {
  ConvBn conv1;
  ConvBn conv2;
  std::optional<ConvBn> shortcut;

  nn::Tensor forward(const nn::Tensor& x, nn::Mode mode) {
    nn::Tensor y = nn::relu(conv1.forward(x, mode));
    y = conv2.forward(y, mode);
    return nn::relu(nn::add(y, shortcut ? shortcut->forward(x, mode) : x));
  }
};

/// A named view of a model tensor. Buffers (batchnorm running stats) are not
/// trainable but are part of the checkpoint.
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

class ResNet1d {
 public:
  ResNet1d(const ArchSpec& spec, std::mt19937_64& rng) : spec_(spec) {
    spec_.validate();
    const std::size_t w = spec_.stem_channels;
    stem_ = ConvBn(1, w, 7, 2, rng);
    pool_ = ConvBn(w, spec_.stage_channels.front(), 3, 2, rng);
    std::size_t in_ch = spec_.stage_channels.front();
    for (std::size_t s = 0; s < spec_.block_counts.size(); ++s) {
      const std::size_t out_ch = spec_.stage_channels[s];
      for (std::size_t b = 0; b < spec_.block_counts[s]; ++b) {
        const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
        BasicBlock block;
        block.conv1 = ConvBn(in_ch, out_ch, 3, stride, rng);
        block.conv2 = ConvBn(out_ch, out_ch, 3, 1, rng);
        if (stride != 1 || in_ch != out_ch) block.shortcut = ConvBn(in_ch, out_ch, 1, stride, rng);
        blocks_.push_back(std::move(block));
        in_ch = out_ch;
      }
    }
    head_weight_ = detail::he_normal({1, in_ch}, in_ch, rng);
    head_bias_ = nn::Tensor(nn::Shape{1}, 0.0, true);
    register_all();
  }

  // Copies would alias parameter storage; move only.
  ResNet1d(const ResNet1d&) = delete;
  ResNet1d& operator=(const ResNet1d&) = delete;
  ResNet1d(ResNet1d&& other) noexcept { *this = std::move(other); }
  ResNet1d& operator=(ResNet1d&& other) noexcept {
    spec_ = std::move(other.spec_);
    stem_ = std::move(other.stem_);
    pool_ = std::move(other.pool_);
    blocks_ = std::move(other.blocks_);
    head_weight_ = std::move(other.head_weight_);
    head_bias_ = std::move(other.head_bias_);
    register_all();
    return *this;
  }

  /// input [B, 1, L] -> [B, 1]
  nn::Tensor forward(const nn::Tensor& input, nn::Mode mode) {
    require(input.rank() == 3 && input.dim(1) == 1 && input.dim(2) == spec_.input_len,
            ErrorKind::RepresentationMismatch,
            "model expects input [B,1," + std::to_string(spec_.input_len) + "], got " +
                nn::shape_string(input.shape()));
    nn::Tensor x = nn::relu(stem_.forward(input, mode));
    x = nn::relu(pool_.forward(x, mode));
    for (auto& block : blocks_) x = block.forward(x, mode);
    return nn::linear(nn::global_avg_pool(x), head_weight_, head_bias_);
  }

  const ArchSpec& spec() const { return spec_; }
  std::vector<nn::Parameter>& parameters() { return params_; }
  const std::vector<nn::Parameter>& parameters() const { return params_; }
  std::vector<NamedBuffer>& buffers() { return buffers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  /// Conv layers actually instantiated, optionally including 1x1 shortcuts.
  std::size_t conv_layer_count(bool include_shortcuts = false) const {
    std::size_t n = 2 + 2 * blocks_.size();
    if (include_shortcuts)
      for (const auto& b : blocks_) n += b.shortcut ? 1 : 0;
    return n;
  }
  std::size_t residual_block_count() const { return blocks_.size(); }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Flat copy of every parameter and buffer, in registry order.
  std::vector<std::vector<double>> state() const {
    std::vector<std::vector<double>> s;
    for (const auto& p : params_) s.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    for (const auto& b : buffers_) s.push_back(*b.values);
    return s;
  }

  void load_state(const std::vector<std::vector<double>>& s) {
    require(s.size() == params_.size() + buffers_.size(), ErrorKind::Shape, "state entry count mismatch");
    std::size_t i = 0;
    for (auto& p : params_) {
      require(s[i].size() == p.tensor.numel(), ErrorKind::Shape, "state size mismatch for " + p.name);
      std::copy(s[i].begin(), s[i].end(), p.tensor.data().begin());
      ++i;
    }
    for (auto& b : buffers_) {
      require(s[i].size() == b.values->size(), ErrorKind::Shape, "state size mismatch for " + b.name);
      *b.values = s[i];
      ++i;
    }
    mark_stats_initialized();
  }

  void mark_stats_initialized() {
    for (auto* cb : conv_bns()) cb->stats.initialized = true;
  }

 private:
  std::vector<ConvBn*> conv_bns() {
    std::vector<ConvBn*> out{&stem_, &pool_};
    for (auto& b : blocks_) {
      out.push_back(&b.conv1);
      out.push_back(&b.conv2);
      if (b.shortcut) out.push_back(&*b.shortcut);
    }
    return out;
  }

  void register_all() {
    params_.clear();
    buffers_.clear();
    std::unordered_set<std::string> names;
    auto add_param = [&](std::string name, nn::Tensor t) {
      require(names.insert(name).second, ErrorKind::Contract, "duplicate parameter name " + name);
      params_.push_back({std::move(name), std::move(t)});
    };
    auto add_conv_bn = [&](const std::string& prefix, ConvBn& cb) {
      add_param(prefix + ".conv.weight", cb.weight);
      add_param(prefix + ".bn.gamma", cb.gamma);
      add_param(prefix + ".bn.beta", cb.beta);
      buffers_.push_back({prefix + ".bn.running_mean", &cb.stats.mean});
      buffers_.push_back({prefix + ".bn.running_var", &cb.stats.var});
    };
    add_conv_bn("stem", stem_);
    add_conv_bn("pool", pool_);
    std::size_t idx = 0;
    for (std::size_t s = 0; s < spec_.block_counts.size(); ++s)
      for (std::size_t b = 0; b < spec_.block_counts[s]; ++b, ++idx) {
        const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
        auto& block = blocks_[idx];
        add_conv_bn(prefix + ".conv1", block.conv1);
        add_conv_bn(prefix + ".conv2", block.conv2);
        if (block.shortcut) add_conv_bn(prefix + ".shortcut", *block.shortcut);
      }
    add_param("head.weight", head_weight_);
    add_param("head.bias", head_bias_);
  }

  ArchSpec spec_;
  ConvBn stem_;
  ConvBn pool_;
  std::vector<BasicBlock> blocks_;
  nn::Tensor head_weight_;
  nn::Tensor head_bias_;
  std::vector<nn::Parameter> params_;
  std::vector<NamedBuffer> buffers_;
};

inline ResNet1d build_model(const ArchSpec& spec, std::mt19937_64& rng) { return ResNet1d(spec, rng); }

}  // namespace octforce
