#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lnd/errors.hpp"
#include "lnd/matrix.hpp"
#include "lnd/rng.hpp"

namespace lnd {

// Output head of a DenseNet. Hidden layers are always tanh.
enum class Head {
  kLinear,           // raw affine outputs
  kSigmoid,          // per-output probability, clamped to the open interval
  kGaussianPolicy,   // affine mean plus learnable state-independent log-std
};

inline std::string head_name(Head h) {
  switch (h) {
    case Head::kLinear: return "linear";
    case Head::kSigmoid: return "sigmoid";
    case Head::kGaussianPolicy: return "gaussian_policy";
  }
  throw ConfigError("head_name: unknown head");
}

inline Head head_from_name(const std::string& s) {
  if (s == "linear") return Head::kLinear;
  if (s == "sigmoid") return Head::kSigmoid;
  if (s == "gaussian_policy") return Head::kGaussianPolicy;
  throw ConfigError("head_from_name: unknown head '" + s + "'");
}

// Sigmoid probabilities stay inside (0,1) by this margin so downstream logs
// and logits remain finite for any finite input.
inline constexpr double kSigmoidFloor = 1e-12;

inline double sigmoid(double a) {
  double p = a >= 0.0 ? 1.0 / (1.0 + std::exp(-a))
                      : std::exp(a) / (1.0 + std::exp(a));
  return std::clamp(p, kSigmoidFloor, 1.0 - kSigmoidFloor);
}

// Fully connected network with all parameters in one flat vector, laid out
// layer by layer as W (out x in, row-major) then b, with the log-std block
// appended at the end for gaussian-policy heads. The flat layout keeps
// optimizer state, gradient assembly, and checkpointing trivial.
class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::vector<int> dims, Head head)
      : dims_(std::move(dims)), head_(head) {
    if (dims_.size() < 2) throw ShapeError("DenseNet: need at least 2 dims");
    for (int d : dims_)
      if (d <= 0) throw ShapeError("DenseNet: non-positive layer dim");
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
      w_off_.push_back(n);
      n += static_cast<std::size_t>(dims_[k + 1]) * dims_[k];
      b_off_.push_back(n);
      n += static_cast<std::size_t>(dims_[k + 1]);
    }
    log_std_off_ = n;
    if (head_ == Head::kGaussianPolicy)
      n += static_cast<std::size_t>(dims_.back());
    params_.assign(n, 0.0);
  }

  // Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)). The
  // nonzero bias draw gives a freshly initialized discriminator a common
  // per-draw output offset, so its initial predictions are near-constant
  // across a batch; several checks pin behavior that depends on this.
  // Policy heads start at sigma = 0.5: wide exploration over a unit action
  // box early on; training shrinks it so the mean policy catches up late.
  static DenseNet random_init(std::vector<int> dims, Head head, Rng& rng) {
    DenseNet net(std::move(dims), head);
    for (int k = 0; k < net.num_layers(); ++k) {
      int fan_in = net.dims_[static_cast<std::size_t>(k)];
      int fan_out = net.dims_[static_cast<std::size_t>(k) + 1];
      double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
      double* w = net.w(k);
      for (std::size_t i = 0;
           i < static_cast<std::size_t>(fan_in) * fan_out; ++i)
        w[i] = rng.uniform(-limit, limit);
      double* b = net.b(k);
      for (int i = 0; i < fan_out; ++i) b[i] = rng.uniform(-limit, limit);
    }
    if (head == Head::kGaussianPolicy) {
      double* ls = net.log_std();
      for (int d = 0; d < net.out_dim(); ++d) ls[d] = std::log(0.5);
    }
    return net;
  }

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  const std::vector<int>& dims() const { return dims_; }
  Head head() const { return head_; }

  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  double* w(int layer) { return params_.data() + w_off_[check_layer(layer)]; }
  const double* w(int layer) const {
    return params_.data() + w_off_[check_layer(layer)];
  }
  double* b(int layer) { return params_.data() + b_off_[check_layer(layer)]; }
  const double* b(int layer) const {
    return params_.data() + b_off_[check_layer(layer)];
  }

  std::size_t w_offset(int layer) const { return w_off_[check_layer(layer)]; }
  std::size_t b_offset(int layer) const { return b_off_[check_layer(layer)]; }

  std::size_t log_std_offset() const {
    if (head_ != Head::kGaussianPolicy)
      throw ShapeError("log_std_offset: head has no log-std block");
    return log_std_off_;
  }
  double* log_std() { return params_.data() + log_std_offset(); }
  const double* log_std() const { return params_.data() + log_std_offset(); }

 private:
  std::size_t check_layer(int layer) const {
    if (layer < 0 || layer >= num_layers())
      throw ShapeError("DenseNet: layer index out of range");
    return static_cast<std::size_t>(layer);
  }

  std::vector<int> dims_;
  Head head_ = Head::kLinear;
  std::vector<double> params_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t log_std_off_ = 0;
};

// Post-activation outputs of every layer for one forward pass; consumed by
// net_backward, which validates it against the net and upstream batch.
struct ForwardCache {
  std::vector<int> dims;  // dims of the net that produced the cache
  Matrix input;
  std::vector<Matrix> acts;
};

namespace detail {

inline void affine_forward(const Matrix& x, const double* w, const double* b,
                           int in, int out, Matrix& y) {
  // y[i][o] = x[i] . w_row(o) + b[o]; w rows are contiguous in the flat
  // layout, so both factors stream sequentially.
  y = Matrix(x.rows, out);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x[i];
    double* yr = y[i];
    for (int o = 0; o < out; ++o) {
      const double* wr = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int k = 0; k < in; ++k) acc += xr[k] * wr[k];
      yr[o] = acc;
    }
  }
}

}  // namespace detail

inline Matrix net_forward(const DenseNet& net, const Matrix& x,
                          ForwardCache* cache = nullptr) {
  if (x.cols != net.in_dim())
    throw ShapeError("net_forward: input " + x.shape_str() + ", expected cols " +
                     std::to_string(net.in_dim()));
  if (cache) {
    cache->dims = net.dims();
    cache->input = x;
    cache->acts.clear();
  }
  Matrix cur = x;
  int last = net.num_layers() - 1;
  for (int k = 0; k <= last; ++k) {
    int in = net.dims()[static_cast<std::size_t>(k)];
    int out = net.dims()[static_cast<std::size_t>(k) + 1];
    Matrix y;
    detail::affine_forward(cur, net.w(k), net.b(k), in, out, y);
    if (k < last) {
      for (double& v : y.data) v = std::tanh(v);
    } else if (net.head() == Head::kSigmoid) {
      for (double& v : y.data) v = sigmoid(v);
    }
    if (cache) cache->acts.push_back(y);
    cur = std::move(y);
  }
  return cur;
}

// Backpropagates upstream = dL/d(output) through the cached pass. Parameter
// gradients are accumulated into param_grad (so branch gradients can share a
// buffer); returns dL/d(input). For gaussian-policy heads the upstream is the
// gradient w.r.t. the mean; log-std gradients are the caller's business.
inline Matrix net_backward(const DenseNet& net, const ForwardCache& cache,
                           const Matrix& upstream,
                           std::vector<double>& param_grad) {
  int last = net.num_layers() - 1;
  if (cache.dims != net.dims() ||
      cache.acts.size() != static_cast<std::size_t>(net.num_layers()))
    throw ShapeError("net_backward: cache does not match net");
  if (cache.input.rows != upstream.rows || upstream.cols != net.out_dim())
    throw ShapeError("net_backward: upstream " + upstream.shape_str() +
                     " does not match cache batch " +
                     std::to_string(cache.input.rows) + "x" +
                     std::to_string(net.out_dim()));
  if (param_grad.size() != net.param_count())
    throw ShapeError("net_backward: param_grad size mismatch");

  // Gradients are formed in a local buffer and folded into param_grad with a
  // single addition per parameter, so stacking several backward passes into
  // one buffer is bit-identical to summing the passes run separately.
  std::vector<double> local(net.param_count(), 0.0);

  Matrix delta = upstream;  // dL/d(post-activation of current layer)
  for (int k = last; k >= 0; --k) {
    const Matrix& y = cache.acts[static_cast<std::size_t>(k)];
    // To pre-activation.
    if (k == last) {
      if (net.head() == Head::kSigmoid)
        for (std::size_t i = 0; i < delta.data.size(); ++i)
          delta.data[i] *= y.data[i] * (1.0 - y.data[i]);
      // linear / gaussian mean: identity
    } else {
      for (std::size_t i = 0; i < delta.data.size(); ++i)
        delta.data[i] *= 1.0 - y.data[i] * y.data[i];
    }

    int in = net.dims()[static_cast<std::size_t>(k)];
    int out = net.dims()[static_cast<std::size_t>(k) + 1];
    const Matrix& x = (k == 0) ? cache.input
                               : cache.acts[static_cast<std::size_t>(k) - 1];
    double* gw = local.data() + net.w_offset(k);
    double* gb = local.data() + net.b_offset(k);
    const double* w = net.w(k);
    Matrix prev(x.rows, in);
    for (int i = 0; i < x.rows; ++i) {
      const double* dr = delta[i];
      const double* xr = x[i];
      double* pr = prev[i];
      for (int o = 0; o < out; ++o) {
        double d = dr[o];
        if (d != 0.0) {
          double* gwr = gw + static_cast<std::size_t>(o) * in;
          const double* wr = w + static_cast<std::size_t>(o) * in;
          for (int c = 0; c < in; ++c) {
            gwr[c] += d * xr[c];
            pr[c] += d * wr[c];
          }
        }
        gb[o] += d;
      }
    }
    delta = std::move(prev);
  }
  for (std::size_t j = 0; j < local.size(); ++j) param_grad[j] += local[j];
  return delta;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(std::vector<double>& params,
                      const std::vector<double>& grad, AdamState& state,
                      const AdamConfig& cfg) {
  if (grad.size() != params.size())
    throw ShapeError("adam_step: grad size " + std::to_string(grad.size()) +
                     " vs params " + std::to_string(params.size()));
  if (state.m.empty() && state.v.empty()) state = AdamState(params.size());
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: optimizer state size mismatch");
  for (double g : grad)
    if (!std::isfinite(g))
      throw DivergenceError("adam_step: non-finite gradient");

  state.step += 1;
  double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    double mhat = state.m[i] / b1t;
    double vhat = state.v[i] / b2t;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Gradient reversal: identity on the forward pass (nothing to compute), and
// upstream * (-lambda) on the backward pass.

inline Matrix grad_reverse(const Matrix& upstream, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InputError("grad_reverse: lambda must be finite and >= 0");
  Matrix out(upstream.rows, upstream.cols);
  if (lambda == 0.0) return out;  // exact zeros
  for (std::size_t i = 0; i < upstream.data.size(); ++i)
    out.data[i] = -lambda * upstream.data[i];
  return out;
}

inline std::vector<double> grad_reverse(const std::vector<double>& upstream,
                                        double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InputError("grad_reverse: lambda must be finite and >= 0");
  std::vector<double> out(upstream.size(), 0.0);
  if (lambda == 0.0) return out;
  for (std::size_t i = 0; i < upstream.size(); ++i)
    out[i] = -lambda * upstream[i];
  return out;
}

// ---------------------------------------------------------------------------
// Binary cross-entropy over a (B x 1) probability column.

inline double bce_loss(const Matrix& probs, const std::vector<double>& labels) {
  if (probs.cols != 1 ||
      probs.rows != static_cast<int>(labels.size()))
    throw ShapeError("bce_loss: probs " + probs.shape_str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  if (probs.rows == 0) throw InputError("bce_loss: empty batch");
  double acc = 0.0;
  for (int i = 0; i < probs.rows; ++i) {
    double p = probs[i][0];
    double y = labels[static_cast<std::size_t>(i)];
    acc += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -acc / probs.rows;
}

// dL/dp with mean reduction.
inline Matrix bce_grad(const Matrix& probs, const std::vector<double>& labels) {
  if (probs.cols != 1 ||
      probs.rows != static_cast<int>(labels.size()))
    throw ShapeError("bce_grad: probs " + probs.shape_str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  Matrix g(probs.rows, 1);
  double inv = 1.0 / probs.rows;
  for (int i = 0; i < probs.rows; ++i) {
    double p = probs[i][0];
    double y = labels[static_cast<std::size_t>(i)];
    g[i][0] = inv * ((1.0 - y) / (1.0 - p) - y / p);
  }
  return g;
}

// Fraction of correct hard predictions at threshold 0.5; a probability of
// exactly 0.5 counts as a prediction of class 1.
inline double binary_accuracy(const Matrix& probs,
                              const std::vector<double>& labels) {
  if (probs.cols != 1 ||
      probs.rows != static_cast<int>(labels.size()))
    throw ShapeError("binary_accuracy: shape mismatch");
  if (probs.rows == 0) throw InputError("binary_accuracy: empty batch");
  int correct = 0;
  for (int i = 0; i < probs.rows; ++i) {
    int pred = probs[i][0] >= 0.5 ? 1 : 0;
    int y = labels[static_cast<std::size_t>(i)] >= 0.5 ? 1 : 0;
    if (pred == y) ++correct;
  }
  return static_cast<double>(correct) / probs.rows;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check (central differences).

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// loss_fn evaluates the scalar loss at a given parameter vector; analytic is
// the gradient under test. Relative error uses max(|a|,|n|,1e-6) in the
// denominator so near-zero coordinates are judged on absolute error at the
// finite-difference noise floor.
template <typename LossFn>
GradCheckResult grad_check(LossFn&& loss_fn, std::vector<double> params,
                           const std::vector<double>& analytic,
                           double eps = 1e-5) {
  if (analytic.size() != params.size())
    throw ShapeError("grad_check: gradient size mismatch");
  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double keep = params[i];
    params[i] = keep + eps;
    double up = loss_fn(params);
    params[i] = keep - eps;
    double dn = loss_fn(params);
    params[i] = keep;
    double num = (up - dn) / (2.0 * eps);
    double a = analytic[i];
    double rel =
        std::fabs(a - num) / std::max({std::fabs(a), std::fabs(num), 1e-6});
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic_at_worst = a;
      res.numeric_at_worst = num;
    }
  }
  return res;
}

}  // namespace lnd
