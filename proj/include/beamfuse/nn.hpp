#pragma once

#include "beamfuse/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace beamfuse {

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorX = Eigen::Vector<S, Eigen::Dynamic>;

/// Fully connected layer, y = x * W + b with x as a batch-by-input matrix.
template <typename S>
struct Dense {
  MatrixX<S> weight;  ///< input x output
  VectorX<S> bias;    ///< output
  MatrixX<S> grad_weight;
  VectorX<S> grad_bias;
  MatrixX<S> cached_input;

  Dense(int in, int out)
      : weight(MatrixX<S>::Zero(in, out)),
        bias(VectorX<S>::Zero(out)),
        grad_weight(MatrixX<S>::Zero(in, out)),
        grad_bias(VectorX<S>::Zero(out)) {}

  MatrixX<S> forward(const MatrixX<S>& x, bool train, std::mt19937_64&) {
    if (x.cols() != weight.rows())
      throw std::invalid_argument("dense: input width " + std::to_string(x.cols()) +
                                  " does not match layer input " + std::to_string(weight.rows()));
    if (train) cached_input = x;
    return (x * weight).rowwise() + bias.transpose();
  }

  MatrixX<S> backward(const MatrixX<S>& grad_out) {
    grad_weight = cached_input.transpose() * grad_out;
    grad_bias = grad_out.colwise().sum();
    return grad_out * weight.transpose();
  }
};

/// Per-feature batch normalization with learned scale and shift. Normalizes
/// with the biased batch variance while training and keeps exponential
/// running statistics (momentum on the new batch) for evaluation.
template <typename S>
struct BatchNorm {
  static constexpr S kEpsilon = static_cast<S>(1e-5);
  S momentum = static_cast<S>(0.1);
  VectorX<S> gamma, beta;
  VectorX<S> running_mean, running_var;
  VectorX<S> grad_gamma, grad_beta;
  MatrixX<S> cached_xhat;
  VectorX<S> cached_inv_std;

  explicit BatchNorm(int dim)
      : gamma(VectorX<S>::Ones(dim)),
        beta(VectorX<S>::Zero(dim)),
        running_mean(VectorX<S>::Zero(dim)),
        running_var(VectorX<S>::Ones(dim)),
        grad_gamma(VectorX<S>::Zero(dim)),
        grad_beta(VectorX<S>::Zero(dim)) {}

  MatrixX<S> forward(const MatrixX<S>& x, bool train, std::mt19937_64&) {
    if (x.cols() != gamma.size())
      throw std::invalid_argument("batchnorm: input width mismatch");
    if (train) {
      if (x.rows() < 2) throw std::invalid_argument("batchnorm: training batch needs >= 2 rows");
      const VectorX<S> mean = x.colwise().mean();
      MatrixX<S> centered = x.rowwise() - mean.transpose();
      const VectorX<S> var = centered.array().square().colwise().mean();
      cached_inv_std = (var.array() + kEpsilon).rsqrt();
      cached_xhat = centered.array().rowwise() * cached_inv_std.transpose().array();
      running_mean = (S{1} - momentum) * running_mean + momentum * mean;
      running_var = (S{1} - momentum) * running_var + momentum * var;
      return (cached_xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
             beta.transpose().array();
    }
    const VectorX<S> inv_std = (running_var.array() + kEpsilon).rsqrt();
    MatrixX<S> xhat = (x.rowwise() - running_mean.transpose()).array().rowwise() *
                      inv_std.transpose().array();
    return (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
           beta.transpose().array();
  }

  MatrixX<S> backward(const MatrixX<S>& grad_out) {
    const auto batch = static_cast<S>(cached_xhat.rows());
    grad_gamma = (grad_out.array() * cached_xhat.array()).colwise().sum();
    grad_beta = grad_out.colwise().sum();
    MatrixX<S> gxhat = grad_out.array().rowwise() * gamma.transpose().array();
    // dx = inv_std/B * (B*gxhat - sum(gxhat) - xhat * sum(gxhat .* xhat))
    const VectorX<S> sum_g = gxhat.colwise().sum();
    const VectorX<S> sum_gx = (gxhat.array() * cached_xhat.array()).colwise().sum();
    MatrixX<S> dx = batch * gxhat;
    dx.rowwise() -= sum_g.transpose();
    dx -= (cached_xhat.array().rowwise() * sum_gx.transpose().array()).matrix();
    dx.array().rowwise() *= (cached_inv_std / batch).transpose().array();
    return dx;
  }
};

/// Rectified linear unit; the subgradient at exactly zero is zero.
template <typename S>
struct Relu {
  MatrixX<S> cached_mask;

  MatrixX<S> forward(const MatrixX<S>& x, bool train, std::mt19937_64&) {
    MatrixX<S> mask = (x.array() > S{0}).template cast<S>();
    if (train) cached_mask = mask;
    return x.cwiseProduct(mask);
  }

  MatrixX<S> backward(const MatrixX<S>& grad_out) { return grad_out.cwiseProduct(cached_mask); }
};

/// Inverted dropout: while training, keeps each activation with probability
/// 1 - rate and scales survivors by 1/(1 - rate); evaluation passes through.
/// freeze_mask() pins the current mask so repeated forwards see identical
/// noise, which finite-difference checks require.
template <typename S>
struct Dropout {
  S rate;
  bool frozen = false;
  MatrixX<S> mask;

  explicit Dropout(double p) : rate(static_cast<S>(p)) {
    if (!(p >= 0.0) || !(p < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  }

  void freeze_mask() { frozen = true; }
  void thaw_mask() { frozen = false; }

  MatrixX<S> forward(const MatrixX<S>& x, bool train, std::mt19937_64& rng) {
    if (!train || rate == S{0}) return x;
    if (!frozen || mask.rows() != x.rows() || mask.cols() != x.cols()) {
      const S keep_scale = S{1} / (S{1} - rate);
      mask.resize(x.rows(), x.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j)  // storage order
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
          mask(i, j) = static_cast<S>(uniform01(rng)) >= rate ? keep_scale : S{0};
    }
    return x.cwiseProduct(mask);
  }

  MatrixX<S> backward(const MatrixX<S>& grad_out) {
    if (rate == S{0}) return grad_out;  // forward passed through, no mask exists
    return grad_out.cwiseProduct(mask);
  }
};

template <typename S>
using Layer = std::variant<Dense<S>, BatchNorm<S>, Relu<S>, Dropout<S>>;

/// A mutable view of one parameter tensor and its gradient buffer.
template <typename S>
struct ParamRef {
  std::string name;
  S* value = nullptr;
  S* grad = nullptr;
  Eigen::Index size = 0;
};

/// An ordered list of layers applied back to back.
template <typename S>
struct LayerStack {
  std::vector<Layer<S>> layers;

  MatrixX<S> forward(MatrixX<S> x, bool train, std::mt19937_64& rng) {
    for (Layer<S>& layer : layers)
      x = std::visit([&](auto& l) { return l.forward(x, train, rng); }, layer);
    return x;
  }

  MatrixX<S> backward(MatrixX<S> grad_out) {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      grad_out = std::visit([&](auto& l) { return l.backward(grad_out); }, *it);
    return grad_out;
  }

  void freeze_dropout(bool frozen) {
    for (Layer<S>& layer : layers)
      if (auto* d = std::get_if<Dropout<S>>(&layer)) d->frozen = frozen;
  }
};

/// Appends views of every trainable tensor of the stack, in layer order, with
/// names prefixed for checkpoints ("prefix.3.weight").
template <typename S>
void collect_params(LayerStack<S>& stack, const std::string& prefix,
                    std::vector<ParamRef<S>>& out) {
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i) + ".";
    if (auto* d = std::get_if<Dense<S>>(&stack.layers[i])) {
      out.push_back({base + "weight", d->weight.data(), d->grad_weight.data(), d->weight.size()});
      out.push_back({base + "bias", d->bias.data(), d->grad_bias.data(), d->bias.size()});
    } else if (auto* bn = std::get_if<BatchNorm<S>>(&stack.layers[i])) {
      out.push_back({base + "gamma", bn->gamma.data(), bn->grad_gamma.data(), bn->gamma.size()});
      out.push_back({base + "beta", bn->beta.data(), bn->grad_beta.data(), bn->beta.size()});
    }
  }
}

/// Appends views of the non-trainable running statistics, for checkpoints.
template <typename S>
void collect_state(LayerStack<S>& stack, const std::string& prefix,
                   std::vector<ParamRef<S>>& out) {
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i) + ".";
    if (auto* bn = std::get_if<BatchNorm<S>>(&stack.layers[i])) {
      out.push_back({base + "running_mean", bn->running_mean.data(), nullptr,
                     bn->running_mean.size()});
      out.push_back({base + "running_var", bn->running_var.data(), nullptr,
                     bn->running_var.size()});
    }
  }
}

/// Glorot/Xavier uniform fill of every dense layer, +-sqrt(6/(fan_in+fan_out)),
/// drawn in storage (column-major) order; biases stay zero. Normalization
/// layers keep scale one, shift zero.
template <typename S>
void init_xavier(LayerStack<S>& stack, std::mt19937_64& rng) {
  for (Layer<S>& layer : stack.layers) {
    if (auto* d = std::get_if<Dense<S>>(&layer)) {
      const double limit = std::sqrt(6.0 / static_cast<double>(d->weight.rows() + d->weight.cols()));
      for (Eigen::Index j = 0; j < d->weight.cols(); ++j)
        for (Eigen::Index i = 0; i < d->weight.rows(); ++i)
          d->weight(i, j) = static_cast<S>(uniform_range(rng, -limit, limit));
      d->bias.setZero();
    }
  }
}

template <typename S>
void zero_grads(std::vector<ParamRef<S>>& params) {
  for (ParamRef<S>& p : params) Eigen::Map<VectorX<S>>(p.grad, p.size).setZero();
}

template <typename S>
long long count_parameters(const std::vector<ParamRef<S>>& params) {
  long long n = 0;
  for (const ParamRef<S>& p : params) n += p.size;
  return n;
}

/// Mean softmax cross-entropy over a batch, stabilized by per-row max
/// subtraction. Targets are one-hot rows.
template <typename S>
struct SoftmaxCrossEntropy {
  MatrixX<S> probs;
  MatrixX<S> targets;

  S loss(const MatrixX<S>& logits, const MatrixX<S>& target_rows) {
    if (logits.rows() != target_rows.rows() || logits.cols() != target_rows.cols())
      throw std::invalid_argument("softmax-ce: logits and targets differ in shape");
    targets = target_rows;
    MatrixX<S> shifted = logits.colwise() - logits.rowwise().maxCoeff();
    MatrixX<S> expv = shifted.array().exp();
    const VectorX<S> norm = expv.rowwise().sum();
    probs = expv.array().colwise() / norm.array();
    S total{0};
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const S log_norm = std::log(norm(i));
      total -= (shifted.row(i).array() - log_norm).matrix().dot(targets.row(i));
    }
    return total / static_cast<S>(logits.rows());
  }

  MatrixX<S> grad() const {
    return (probs - targets) / static_cast<S>(probs.rows());
  }
};

/// Adam with bias correction; first/second moment buffers per tensor.
template <typename S>
struct AdamState {
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S epsilon = static_cast<S>(1e-8);
  long long t = 0;
  std::vector<VectorX<S>> m, v;

  void init(const std::vector<ParamRef<S>>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const ParamRef<S>& p : params) {
      m.push_back(VectorX<S>::Zero(p.size));
      v.push_back(VectorX<S>::Zero(p.size));
    }
  }

  void step(std::vector<ParamRef<S>>& params, S lr) {
    if (m.size() != params.size()) throw std::logic_error("adam: not initialized for these params");
    ++t;
    const S c1 = S{1} - static_cast<S>(std::pow(static_cast<double>(beta1), t));
    const S c2 = S{1} - static_cast<S>(std::pow(static_cast<double>(beta2), t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::Map<VectorX<S>> w(params[i].value, params[i].size);
      Eigen::Map<const VectorX<S>> g(params[i].grad, params[i].size);
      m[i] = beta1 * m[i] + (S{1} - beta1) * g;
      v[i] = beta2 * v[i] + (S{1} - beta2) * g.cwiseProduct(g);
      w.array() -= lr * (m[i] / c1).array() / ((v[i] / c2).array().sqrt() + epsilon);
    }
  }
};

/// Piecewise-constant decay: full rate for the first half of training, a
/// tenth until ninety percent, then a hundredth.
struct LrSchedule {
  double base = 1e-3;
  int epochs = 60;
};

inline double lr_at(const LrSchedule& schedule, int epoch) {
  if (epoch < 0 || epoch >= schedule.epochs) throw std::out_of_range("lr_at: epoch out of range");
  if (epoch * 2 < schedule.epochs) return schedule.base;
  if (epoch * 10 < 9 * schedule.epochs) return schedule.base / 10.0;
  return schedule.base / 100.0;
}

/// Multiply-accumulate count of a dense chain: the sum of consecutive width
/// products.
inline long long layer_chain_flops(std::span<const int> widths) {
  long long total = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    total += static_cast<long long>(widths[i]) * widths[i + 1];
  return total;
}

/// Worst relative disagreement between the analytic gradients already stored
/// in `params` and central finite differences of `loss_fn`, sampling every
/// `stride`-th entry of each tensor. `loss_fn` must be a pure re-evaluation
/// (frozen dropout, fixed batch). Entries are perturbed in place and restored.
template <typename S, typename LossFn>
double max_relative_gradient_error(std::vector<ParamRef<S>>& params, LossFn&& loss_fn, double h,
                                   Eigen::Index stride) {
  if (stride < 1) throw std::invalid_argument("gradient check: stride must be >= 1");
  double worst = 0.0;
  for (ParamRef<S>& p : params) {
    for (Eigen::Index i = 0; i < p.size; i += stride) {
      const S saved = p.value[i];
      p.value[i] = saved + static_cast<S>(h);
      const double loss_plus = static_cast<double>(loss_fn());
      p.value[i] = saved - static_cast<S>(h);
      const double loss_minus = static_cast<double>(loss_fn());
      p.value[i] = saved;
      const double fd = (loss_plus - loss_minus) / (2.0 * h);
      const double analytic = static_cast<double>(p.grad[i]);
      const double rel =
          std::abs(analytic - fd) / std::max({1e-8, std::abs(analytic), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace beamfuse
