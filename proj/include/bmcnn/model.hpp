#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmcnn/matcher.hpp"
#include "bmcnn/neural/activation.hpp"
#include "bmcnn/neural/adam.hpp"
#include "bmcnn/neural/batchnorm.hpp"
#include "bmcnn/neural/conv.hpp"
#include "bmcnn/neural/init.hpp"
#include "bmcnn/neural/tensor.hpp"
#include "bmcnn/patching.hpp"
#include "bmcnn/rng.hpp"

namespace bmcnn {

/// Blocks are divided by this on entry to the network; residuals are multiplied by it
/// on exit.
inline constexpr double kIntensityScale = 255.0;

struct NetworkSpec {
  int depth = 17;
  int width = 64;
  int k = 4;
  int n_patch = 20;    ///< patch size the weights were trained for (metadata)
  int sigma_tag = 25;  ///< training noise level (metadata)

  int in_channels() const { return 2 * k; }
};

void validate(const NetworkSpec& spec);

enum class Stage { FeatureExtraction, FeatureRefinement, Reconstruction };

/// Stage label of 1-based layer `layer`. For depth 17: 1-6, 7-11, 12-17; other depths
/// scale those boundaries proportionally. Labels have no structural effect.
Stage stage_of(int layer, int depth);
const char* stage_name(Stage stage);

/// Exact learnable-parameter count (conv weights and biases, BN gamma and beta).
std::size_t parameter_count(const NetworkSpec& spec);

template <typename Scalar>
struct Layer {
  nn::ConvParams<Scalar> conv;
  std::optional<nn::BatchNormParams<Scalar>> bn;
  bool relu = true;
};

/// Per-layer activations recorded by a training forward pass.
template <typename Scalar>
struct ForwardTrace {
  struct Step {
    nn::Tensor<Scalar> input;
    nn::BatchNormCache<Scalar> bn;
    nn::Tensor<Scalar> pre_relu;
  };
  std::vector<Step> steps;
};

/// Plain residual CNN: conv+ReLU, (depth - 2) x conv+BN+ReLU, conv.
template <typename Scalar>
class Network {
 public:
  Network() = default;
  explicit Network(const NetworkSpec& spec) : spec_(spec) {
    validate(spec);
    for (int l = 1; l <= spec.depth; ++l) {
      Layer<Scalar> layer;
      const int in = l == 1 ? spec.in_channels() : spec.width;
      const int out = l == spec.depth ? 1 : spec.width;
      layer.conv = nn::ConvParams<Scalar>(in, out);
      if (l > 1 && l < spec.depth) layer.bn.emplace(out);
      layer.relu = l < spec.depth;
      layers_.push_back(std::move(layer));
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  NetworkSpec& spec() { return spec_; }
  int depth() const { return spec_.depth; }
  std::vector<Layer<Scalar>>& layers() { return layers_; }
  const std::vector<Layer<Scalar>>& layers() const { return layers_; }

  /// Inference through layers 1..upto (inclusive), BN from running statistics.
  nn::Tensor<Scalar> infer(const nn::Tensor<Scalar>& input, int upto = -1) const {
    if (upto < 0) upto = spec_.depth;
    check_input(input);
    nn::Tensor<Scalar> x = input;
    for (int l = 0; l < upto; ++l) {
      const Layer<Scalar>& layer = layers_[static_cast<std::size_t>(l)];
      x = nn::conv2d_forward(x, layer.conv);
      if (layer.bn) x = nn::batchnorm_infer(x, *layer.bn);
      if (layer.relu) x = nn::relu_forward(x);
    }
    return x;
  }

  /// Forward pass with batch statistics (updating running BN statistics), recording
  /// everything backward() needs.
  nn::Tensor<Scalar> forward_train(const nn::Tensor<Scalar>& input, ForwardTrace<Scalar>& trace) {
    check_input(input);
    trace.steps.assign(layers_.size(), {});
    nn::Tensor<Scalar> x = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Layer<Scalar>& layer = layers_[l];
      auto& step = trace.steps[l];
      step.input = x;
      x = nn::conv2d_forward(x, layer.conv);
      if (layer.bn) x = nn::batchnorm_forward(x, *layer.bn, nn::Mode::Train, &step.bn);
      if (layer.relu) {
        step.pre_relu = x;
        x = nn::relu_forward(x);
      }
    }
    return x;
  }

  /// Accumulates parameter gradients for d(loss)/d(output) = grad_out; returns the
  /// gradient with respect to the network input.
  nn::Tensor<Scalar> backward(const ForwardTrace<Scalar>& trace, const nn::Tensor<Scalar>& grad_out) {
    nn::Tensor<Scalar> g = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      Layer<Scalar>& layer = layers_[l];
      const auto& step = trace.steps[l];
      if (layer.relu) g = nn::relu_backward(step.pre_relu, g);
      if (layer.bn) g = nn::batchnorm_backward(g, *layer.bn, step.bn);
      g = nn::conv2d_backward(step.input, layer.conv, g);
    }
    return g;
  }

  void zero_grad() {
    for (auto& layer : layers_) {
      layer.conv.zero_grad();
      if (layer.bn) layer.bn->zero_grad();
    }
  }

  /// Learnable parameters in layer order: conv weights, conv bias, [BN gamma, BN beta].
  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto& layer : layers_) {
      out.push_back(&layer.conv.weights);
      out.push_back(&layer.conv.bias);
      if (layer.bn) {
        out.push_back(&layer.bn->gamma);
        out.push_back(&layer.bn->beta);
      }
    }
    return out;
  }

  std::size_t parameter_count() const { return bmcnn::parameter_count(spec_); }

  template <typename Other>
  Network<Other> cast() const {
    Network<Other> out(spec_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& src = layers_[l];
      auto& dst = out.layers()[l];
      dst.conv.weights.value = src.conv.weights.value.template cast<Other>();
      dst.conv.bias.value = src.conv.bias.value.template cast<Other>();
      if (src.bn) {
        dst.bn->gamma.value = src.bn->gamma.value.template cast<Other>();
        dst.bn->beta.value = src.bn->beta.value.template cast<Other>();
        dst.bn->running_mean = src.bn->running_mean.template cast<Other>();
        dst.bn->running_var = src.bn->running_var.template cast<Other>();
        dst.bn->momentum = src.bn->momentum;
        dst.bn->epsilon = src.bn->epsilon;
      }
    }
    return out;
  }

 private:
  void check_input(const nn::Tensor<Scalar>& input) const {
    if (input.channels() != spec_.in_channels()) {
      throw DimensionError("network expects " + std::to_string(spec_.in_channels()) + " input channels, got " +
                           std::to_string(input.channels()));
    }
  }

  NetworkSpec spec_;
  std::vector<Layer<Scalar>> layers_;
};

/// Xavier-initialized weights (fan-in in_channels * 9, seed derived per layer), conv
/// biases 0.2, BN gamma 1, beta 0, running statistics (0, 1).
template <typename Scalar>
Network<Scalar> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network<Scalar> net(spec);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& conv = net.layers()[l].conv;
    conv.weights.value = nn::xavier_init<Scalar>(conv.out_channels, Eigen::Index{conv.in_channels} * 9,
                                                 conv.in_channels * 9, derive_seed(seed, 0x78617669ULL, l));
    conv.bias.value.setConstant(Scalar(0.2));
  }
  return net;
}

/// All weights, biases and BN affine parameters zero; BN running statistics (0, 1).
template <typename Scalar>
Network<Scalar> zero_network(const NetworkSpec& spec) {
  return Network<Scalar>(spec);
}

/// Packs blocks into a (blocks, 2k, n, n) tensor, scaled by 1 / kIntensityScale.
template <typename Scalar>
nn::Tensor<Scalar> blocks_to_tensor(std::span<const PatchBlock> blocks) {
  if (blocks.empty()) throw ConfigError("no blocks to pack");
  const int channels = static_cast<int>(blocks.front().channels.size());
  const int n = blocks.front().n_patch;
  nn::Tensor<Scalar> t(static_cast<int>(blocks.size()), channels, n, n);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const PatchBlock& block = blocks[b];
    if (static_cast<int>(block.channels.size()) != channels || block.n_patch != n) {
      throw DimensionError("blocks in a batch must share channel count and patch size");
    }
    for (int c = 0; c < channels; ++c) {
      const PatchArray& plane = block.channels[static_cast<std::size_t>(c)];
      t.sample(static_cast<int>(b)).row(c) =
          (Eigen::Map<const Eigen::RowVectorXd>(plane.data(), plane.size()) / kIntensityScale).template cast<Scalar>();
    }
  }
  return t;
}

template <typename Scalar>
void check_block(const Network<Scalar>& net, const PatchBlock& block) {
  if (static_cast<int>(block.channels.size()) != net.spec().in_channels()) {
    throw DimensionError("block has " + std::to_string(block.channels.size()) + " channels, network expects " +
                         std::to_string(net.spec().in_channels()));
  }
}

/// Estimated noise of each block's reference patch, in intensity units.
template <typename Scalar>
std::vector<Patch> forward_residuals(const Network<Scalar>& net, std::span<const PatchBlock> blocks) {
  for (const auto& block : blocks) check_block(net, block);
  const nn::Tensor<Scalar> out = net.infer(blocks_to_tensor<Scalar>(blocks));
  std::vector<Patch> residuals;
  residuals.reserve(blocks.size());
  const int n = out.height();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    PatchArray data(n, n);
    const auto row = out.sample(static_cast<int>(b)).row(0);
    for (int i = 0; i < n * n; ++i) data.data()[i] = static_cast<double>(row(i)) * kIntensityScale;
    residuals.push_back({blocks[b].origins.front(), std::move(data)});
  }
  return residuals;
}

template <typename Scalar>
Patch forward_residual(const Network<Scalar>& net, const PatchBlock& block) {
  return forward_residuals(net, std::span<const PatchBlock>(&block, 1)).front();
}

/// Reference noisy patch minus the estimated residual.
template <typename Scalar>
Patch denoise_block(const Network<Scalar>& net, const PatchBlock& block) {
  Patch out = forward_residual(net, block);
  out.data = block.channels.front() - out.data;
  return out;
}

/// Serialized "BMW1" weight file (32-bit floats, trailing CRC-32).
std::vector<std::uint8_t> save_weights(const Network<float>& net);
Network<float> load_weights(std::span<const std::uint8_t> bytes);

}  // namespace bmcnn
