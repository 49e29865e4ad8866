#include "bmcnn/diagnostics.hpp"

#include "bmcnn/model.hpp"
#include "bmcnn/neural/activation.hpp"
#include "bmcnn/neural/batchnorm.hpp"
#include "bmcnn/neural/conv.hpp"
#include "bmcnn/neural/loss.hpp"
#include "bmcnn/rng.hpp"

namespace bmcnn::diagnostics {
namespace {

using nn::GradCheckTarget;
using nn::Tensor;
using Matrix = nn::RowMatrix<double>;

class Filler {
 public:
  explicit Filler(std::uint64_t seed) : rng_(seed) {}

  template <typename Derived>
  void normal(Eigen::PlainObjectBase<Derived>& m, double scale = 1.0) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng_.gaussian(counter_++);
  }

  Tensor<double> tensor(int n, int c, int h, int w, double scale = 1.0) {
    Tensor<double> t(n, c, h, w);
    normal(t.values(), scale);
    return t;
  }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Tensor<double>& t) { return {t.data(), static_cast<std::size_t>(t.size())}; }
std::span<const double> span_of(const Tensor<double>& t) { return {t.data(), static_cast<std::size_t>(t.size())}; }

// r . (out - baseline). Same gradient as r . out, but the finite differences see only the
// change in each output instead of a large sum that cancels.
struct Projection {
  Tensor<double> baseline;
  Tensor<double> weights;

  double operator()(const Tensor<double>& out) const { return (out.values() - baseline.values()).dot(weights.values()); }
};

void append_mask(std::vector<std::uint8_t>& sig, const Tensor<double>& pre) {
  for (Eigen::Index i = 0; i < pre.size(); ++i) sig.push_back(pre.data()[i] > 0.0 ? 1 : 0);
}

}  // namespace

GradCheckCase check_conv_layer(std::uint64_t seed) {
  Filler fill(seed);
  Tensor<double> x = fill.tensor(2, 3, 6, 5);
  nn::ConvParams<double> conv(3, 4);
  fill.normal(conv.weights.value, 0.5);
  fill.normal(conv.bias.value);
  const Tensor<double> r = fill.tensor(2, 4, 6, 5);

  const Tensor<double> grad_in = nn::conv2d_backward(x, conv, r);
  const Matrix gw = conv.weights.grad, gb = conv.bias.grad;

  std::vector<GradCheckTarget> targets{{"weights", span_of(conv.weights.value), span_of(gw)},
                                       {"bias", span_of(conv.bias.value), span_of(gb)},
                                       {"input", span_of(x), span_of(grad_in)}};
  const Projection project{nn::conv2d_forward(x, conv), r};
  auto loss = [&] { return project(nn::conv2d_forward(x, conv)); };
  return {"conv2d", kSingleLayerTolerance, nn::gradient_check(targets, loss)};
}

GradCheckCase check_batchnorm_layer(std::uint64_t seed) {
  Filler fill(seed);
  Tensor<double> x = fill.tensor(3, 2, 4, 4, 2.0);
  nn::BatchNormParams<double> bn(2);
  fill.normal(bn.gamma.value);
  fill.normal(bn.beta.value);
  const Tensor<double> r = fill.tensor(3, 2, 4, 4);

  nn::BatchNormCache<double> cache;
  nn::batchnorm_forward(x, bn, nn::Mode::Train, &cache);
  const Tensor<double> grad_in = nn::batchnorm_backward(r, bn, cache);
  const Matrix gg = bn.gamma.grad, gbeta = bn.beta.grad;

  std::vector<GradCheckTarget> targets{{"gamma", span_of(bn.gamma.value), span_of(gg)},
                                       {"beta", span_of(bn.beta.value), span_of(gbeta)},
                                       {"input", span_of(x), span_of(grad_in)}};
  const Projection project{nn::batchnorm_forward(x, bn, nn::Mode::Train), r};
  auto loss = [&] { return project(nn::batchnorm_forward(x, bn, nn::Mode::Train)); };
  return {"batchnorm(train)", kSingleLayerTolerance, nn::gradient_check(targets, loss)};
}

GradCheckCase check_relu_layer(std::uint64_t seed) {
  Filler fill(seed);
  Tensor<double> x = fill.tensor(2, 3, 4, 4);
  // Keep inputs away from the kink at 0.
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double& v = x.data()[i];
    if (std::abs(v) < 1e-3) v = v < 0.0 ? -1e-3 : 1e-3;
  }
  const Tensor<double> r = fill.tensor(2, 3, 4, 4);
  const Tensor<double> grad_in = nn::relu_backward(x, r);
  std::vector<GradCheckTarget> targets{{"input", span_of(x), span_of(grad_in)}};
  const Projection project{nn::relu_forward(x), r};
  auto loss = [&] { return project(nn::relu_forward(x)); };
  return {"relu", kSingleLayerTolerance, nn::gradient_check(targets, loss)};
}

GradCheckCase check_conv_bn_relu(std::uint64_t seed) {
  Filler fill(seed);
  Tensor<double> x = fill.tensor(2, 3, 5, 5);
  nn::ConvParams<double> conv(3, 4);
  fill.normal(conv.weights.value, 0.5);
  fill.normal(conv.bias.value);
  nn::BatchNormParams<double> bn(4);
  fill.normal(bn.gamma.value);
  fill.normal(bn.beta.value);
  const Tensor<double> r = fill.tensor(2, 4, 5, 5);

  Tensor<double> pre;
  auto forward = [&](nn::BatchNormCache<double>* cache) {
    pre = nn::batchnorm_forward(nn::conv2d_forward(x, conv), bn, nn::Mode::Train, cache);
    return nn::relu_forward(pre);
  };

  nn::BatchNormCache<double> cache;
  forward(&cache);
  const Tensor<double> g_pre = nn::relu_backward(pre, r);
  const Tensor<double> g_conv = nn::batchnorm_backward(g_pre, bn, cache);
  const Tensor<double> grad_in = nn::conv2d_backward(x, conv, g_conv);
  const Matrix gw = conv.weights.grad, gb = conv.bias.grad, gg = bn.gamma.grad, gbeta = bn.beta.grad;

  std::vector<GradCheckTarget> targets{{"conv weights", span_of(conv.weights.value), span_of(gw)},
                                       {"conv bias", span_of(conv.bias.value), span_of(gb)},
                                       {"bn gamma", span_of(bn.gamma.value), span_of(gg)},
                                       {"bn beta", span_of(bn.beta.value), span_of(gbeta)},
                                       {"input", span_of(x), span_of(grad_in)}};
  const Projection project{forward(nullptr), r};
  auto loss = [&] { return project(forward(nullptr)); };
  auto signature = [&] {
    std::vector<std::uint8_t> sig;
    append_mask(sig, pre);
    return sig;
  };
  return {"conv+bn+relu", kStackTolerance, nn::gradient_check(targets, loss, signature)};
}

GradCheckCase check_network_l1(std::uint64_t seed, int depth) {
  Filler fill(seed);
  const NetworkSpec spec{depth, 4, 1, 6, 25};
  Network<double> net = build_network<double>(spec, seed);
  for (auto& layer : net.layers()) {
    fill.normal(layer.conv.bias.value, 0.1);
    if (layer.bn) {
      Matrix jitter(layer.bn->gamma.value.rows(), 1);
      fill.normal(jitter, 0.1);
      layer.bn->gamma.value += jitter;
      fill.normal(layer.bn->beta.value, 0.1);
    }
  }
  Tensor<double> x = fill.tensor(3, spec.in_channels(), 6, 6);
  const Tensor<double> target = fill.tensor(3, 1, 6, 6, 0.5);

  ForwardTrace<double> trace;
  Tensor<double> estimate;
  auto loss = [&] {
    estimate = net.forward_train(x, trace);
    return nn::l1_loss(estimate, target).loss;
  };
  auto signature = [&] {
    std::vector<std::uint8_t> sig;
    for (const auto& step : trace.steps)
      if (step.pre_relu.size() > 0) append_mask(sig, step.pre_relu);
    const auto diff = (estimate.values() - target.values()).eval();
    for (Eigen::Index i = 0; i < diff.size(); ++i) sig.push_back(diff(i) > 0.0 ? 2 : (diff(i) < 0.0 ? 0 : 1));
    return sig;
  };

  net.zero_grad();
  loss();
  const Tensor<double> grad_in = net.backward(trace, nn::l1_loss(estimate, target).grad);

  std::vector<Matrix> analytic;
  std::vector<GradCheckTarget> targets;
  const auto params = net.parameters();
  analytic.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic.push_back(params[i]->grad);
    targets.push_back({"param group " + std::to_string(i), span_of(params[i]->value), span_of(analytic.back())});
  }
  targets.push_back({"input", span_of(x), span_of(grad_in)});
  return {"network depth " + std::to_string(depth) + " + L1", kNetworkTolerance,
          nn::gradient_check(targets, loss, signature)};
}

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t base_seed, int seeds) {
  std::vector<GradCheckCase> out;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
    out.push_back(check_conv_layer(seed));
    out.push_back(check_batchnorm_layer(seed));
    out.push_back(check_relu_layer(seed));
    out.push_back(check_conv_bn_relu(seed));
    out.push_back(check_network_l1(seed));
  }
  return out;
}

}  // namespace bmcnn::diagnostics
