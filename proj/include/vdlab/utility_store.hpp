#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vdlab/errors.hpp"
#include "vdlab/rng.hpp"

namespace vdlab {

enum class StoreKind { tabular, perceptron };

/// One regression sample for a store update: move q(input, action)
/// toward target.
struct TargetSample {
  std::int64_t input = 0;
  int action = 0;
  double target = 0.0;
};

/// A raw gradient contribution dL/dq(input, action), used when the loss
/// is defined on a quantity downstream of the store (e.g. a mixed joint
/// value).
struct QGradSample {
  std::int64_t input = 0;
  int action = 0;
  double dloss_dq = 0.0;
};

struct PerceptronSpec {
  int input_dim = 0;
  int hidden_dim = 64;
  int n_actions = 0;
  double weight_scale = 1.0;  // init range is scale / sqrt(fan_in)
};

/// Maps an input id to a feature vector. `onehot_dim > 0` marks the
/// common case where the id itself is the active index, which the
/// perceptron exploits with a sparse forward pass.
struct InputEncoder {
  int dim = 0;
  int onehot_dim = 0;
  std::function<void(std::int64_t, std::vector<double>&)> encode;

  static InputEncoder one_hot(std::int64_t n) {
    InputEncoder e;
    e.dim = static_cast<int>(n);
    e.onehot_dim = static_cast<int>(n);
    e.encode = [n](std::int64_t id, std::vector<double>& out) {
      out.assign(static_cast<std::size_t>(n), 0.0);
      out[static_cast<std::size_t>(id)] = 1.0;
    };
    return e;
  }

  static InputEncoder features(int dim,
                               std::function<void(std::int64_t, std::vector<double>&)> fn) {
    InputEncoder e;
    e.dim = dim;
    e.onehot_dim = 0;
    e.encode = std::move(fn);
    return e;
  }
};

namespace detail {

/// RMSProp with the usual square-average accumulator.
class RmsProp {
 public:
  RmsProp(std::size_t n, double alpha, double eps)
      : square_avg_(n, 0.0), alpha_(alpha), eps_(eps) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      square_avg_[i] = alpha_ * square_avg_[i] + (1.0 - alpha_) * grad[i] * grad[i];
      params[i] -= lr * grad[i] / (std::sqrt(square_avg_[i]) + eps_);
    }
  }

 private:
  std::vector<double> square_avg_;
  double alpha_;
  double eps_;
};

}  // namespace detail

/// One hidden rectifier layer with analytic gradients; parameters live in
/// a single flat vector so gradient checks and checkpoints are simple.
class Perceptron {
 public:
  Perceptron(PerceptronSpec spec, Rng& init_rng) : spec_(spec) {
    if (spec.input_dim <= 0 || spec.hidden_dim <= 0 || spec.n_actions <= 0)
      throw InputError("Perceptron: bad dimensions");
    params_.resize(n_params());
    const double s1 = spec.weight_scale / std::sqrt(static_cast<double>(spec.input_dim));
    const double s2 = spec.weight_scale / std::sqrt(static_cast<double>(spec.hidden_dim));
    for (std::size_t i = 0; i < static_cast<std::size_t>(w1_count()); ++i)
      params_[w1_off() + i] = init_rng.uniform_real(-s1, s1);
    for (std::size_t i = 0; i < static_cast<std::size_t>(w2_count()); ++i)
      params_[w2_off() + i] = init_rng.uniform_real(-s2, s2);
    // biases start at zero
  }

  const PerceptronSpec& spec() const { return spec_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t n_params() const {
    return static_cast<std::size_t>(w1_count() + spec_.hidden_dim +
                                    w2_count() + spec_.n_actions);
  }

  /// q-values for a dense input; `onehot` short-circuits the first layer
  /// to a column read when >= 0.
  void forward(const std::vector<double>& x, int onehot, std::vector<double>& q,
               std::vector<double>* hidden_out = nullptr) const {
    const int H = spec_.hidden_dim, A = spec_.n_actions, I = spec_.input_dim;
    thread_local std::vector<double> h;
    h.assign(static_cast<std::size_t>(H), 0.0);
    if (onehot >= 0) {
      for (int j = 0; j < H; ++j)
        h[static_cast<std::size_t>(j)] = w1(j, onehot) + b1(j);
    } else {
      for (int j = 0; j < H; ++j) {
        double acc = b1(j);
        const double* row = &params_[w1_off() + static_cast<std::size_t>(j) * I];
        for (int i = 0; i < I; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        h[static_cast<std::size_t>(j)] = acc;
      }
    }
    for (int j = 0; j < H; ++j)
      if (h[static_cast<std::size_t>(j)] < 0) h[static_cast<std::size_t>(j)] = 0;
    q.assign(static_cast<std::size_t>(A), 0.0);
    for (int a = 0; a < A; ++a) {
      double acc = b2(a);
      const double* row = &params_[w2_off() + static_cast<std::size_t>(a) * H];
      for (int j = 0; j < H; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
      q[static_cast<std::size_t>(a)] = acc;
    }
    if (hidden_out) *hidden_out = h;
  }

  /// Accumulates dL/dparams for a single sample given upstream dL/dq.
  /// `x`/`onehot` must match the forward pass that produced `hidden`.
  void backward(const std::vector<double>& x, int onehot,
                const std::vector<double>& hidden, const std::vector<double>& dq,
                std::vector<double>& grad) const {
    const int H = spec_.hidden_dim, A = spec_.n_actions, I = spec_.input_dim;
    thread_local std::vector<double> dh;
    dh.assign(static_cast<std::size_t>(H), 0.0);
    for (int a = 0; a < A; ++a) {
      const double g = dq[static_cast<std::size_t>(a)];
      if (g == 0.0) continue;
      grad[b2_off() + static_cast<std::size_t>(a)] += g;
      double* w2_grad = &grad[w2_off() + static_cast<std::size_t>(a) * H];
      const double* w2_row = &params_[w2_off() + static_cast<std::size_t>(a) * H];
      for (int j = 0; j < H; ++j) {
        w2_grad[j] += g * hidden[static_cast<std::size_t>(j)];
        dh[static_cast<std::size_t>(j)] += g * w2_row[j];
      }
    }
    for (int j = 0; j < H; ++j) {
      if (hidden[static_cast<std::size_t>(j)] <= 0) continue;  // rectifier gate
      const double g = dh[static_cast<std::size_t>(j)];
      if (g == 0.0) continue;
      grad[b1_off() + static_cast<std::size_t>(j)] += g;
      if (onehot >= 0) {
        grad[w1_off() + static_cast<std::size_t>(j) * I + static_cast<std::size_t>(onehot)] += g;
      } else {
        double* w1_grad = &grad[w1_off() + static_cast<std::size_t>(j) * I];
        for (int i = 0; i < I; ++i) w1_grad[i] += g * x[static_cast<std::size_t>(i)];
      }
    }
  }

  double w1(int j, int i) const {
    return params_[w1_off() + static_cast<std::size_t>(j) * spec_.input_dim +
                   static_cast<std::size_t>(i)];
  }
  double b1(int j) const { return params_[b1_off() + static_cast<std::size_t>(j)]; }
  double b2(int a) const { return params_[b2_off() + static_cast<std::size_t>(a)]; }

  std::size_t w1_off() const { return 0; }
  std::size_t b1_off() const { return static_cast<std::size_t>(w1_count()); }
  std::size_t w2_off() const { return b1_off() + static_cast<std::size_t>(spec_.hidden_dim); }
  std::size_t b2_off() const { return w2_off() + static_cast<std::size_t>(w2_count()); }

 private:
  int w1_count() const { return spec_.hidden_dim * spec_.input_dim; }
  int w2_count() const { return spec_.n_actions * spec_.hidden_dim; }

  PerceptronSpec spec_;
  std::vector<double> params_;
};

/// Per-agent action-value function. Either an exact table over dense
/// input ids or a small perceptron over encoded inputs.
class UtilityStore {
 public:
  static UtilityStore make_tabular(std::int64_t n_inputs, int n_actions) {
    UtilityStore s;
    s.kind_ = StoreKind::tabular;
    s.n_inputs_ = n_inputs;
    s.n_actions_ = n_actions;
    if (n_inputs <= 0 || n_actions <= 0) throw InputError("UtilityStore: bad dims");
    s.table_.assign(static_cast<std::size_t>(n_inputs * n_actions), 0.0);
    return s;
  }

  static UtilityStore make_perceptron(InputEncoder encoder, int hidden_dim,
                                      int n_actions, Rng init_rng,
                                      double rms_alpha = 0.99, double rms_eps = 1e-5) {
    UtilityStore s;
    s.kind_ = StoreKind::perceptron;
    s.n_inputs_ = encoder.onehot_dim > 0 ? encoder.onehot_dim : -1;
    s.n_actions_ = n_actions;
    s.encoder_ = std::move(encoder);
    PerceptronSpec spec;
    spec.input_dim = s.encoder_.dim;
    spec.hidden_dim = hidden_dim;
    spec.n_actions = n_actions;
    s.net_ = std::make_shared<Perceptron>(spec, init_rng);
    s.opt_ = std::make_shared<detail::RmsProp>(s.net_->n_params(), rms_alpha, rms_eps);
    return s;
  }

  StoreKind kind() const { return kind_; }
  int n_actions() const { return n_actions_; }
  std::int64_t n_inputs() const { return n_inputs_; }
  std::uint64_t version() const { return version_; }
  void set_version(std::uint64_t v) { version_ = v; }
  int input_dim() const {
    return kind_ == StoreKind::perceptron ? net_->spec().input_dim
                                          : static_cast<int>(n_inputs_);
  }
  int hidden_dim() const {
    return kind_ == StoreKind::perceptron ? net_->spec().hidden_dim : 0;
  }
  bool one_hot_input() const {
    return kind_ == StoreKind::perceptron && encoder_.onehot_dim > 0;
  }

  double q_value(std::int64_t input, int action) const {
    check(input, action);
    if (kind_ == StoreKind::tabular)
      return table_[static_cast<std::size_t>(input * n_actions_ + action)];
    thread_local std::vector<double> q;
    forward(input, q);
    return q[static_cast<std::size_t>(action)];
  }

  void q_values(std::int64_t input, std::vector<double>& out) const {
    check(input, 0);
    if (kind_ == StoreKind::tabular) {
      out.assign(table_.begin() + static_cast<std::ptrdiff_t>(input * n_actions_),
                 table_.begin() + static_cast<std::ptrdiff_t>((input + 1) * n_actions_));
      return;
    }
    forward(input, out);
  }

  void set(std::int64_t input, int action, double value) {
    check(input, action);
    if (kind_ != StoreKind::tabular)
      throw InputError("UtilityStore: set() is tabular-only");
    table_[static_cast<std::size_t>(input * n_actions_ + action)] = value;
    ++version_;
  }

  /// Greedy action; ties break to the lowest action id.
  int greedy(std::int64_t input) const {
    thread_local std::vector<double> q;
    q_values(input, q);
    int best = 0;
    for (int a = 1; a < n_actions_; ++a)
      if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
    return best;
  }

  int epsilon_greedy(std::int64_t input, double epsilon, Rng& rng) const {
    if (epsilon < 0.0 || epsilon > 1.0)
      throw InputError("epsilon_greedy: epsilon outside [0,1]");
    if (rng.bernoulli(epsilon)) return rng.uniform_int(n_actions_);
    return greedy(input);
  }

  /// Supervised move toward per-sample targets. Tabular entries step a
  /// learning_rate fraction toward the target (lr=1 sets them exactly);
  /// the perceptron takes one RMSProp step on the squared error. Returns
  /// the pre-step mean squared error.
  double gradient_step(const std::vector<TargetSample>& batch, double lr) {
    if (batch.empty()) return 0.0;
    for (const auto& t : batch) {
      check(t.input, t.action);
      if (!std::isfinite(t.target))
        throw DivergenceError("gradient_step: non-finite target");
    }
    double loss = 0.0;
    if (kind_ == StoreKind::tabular) {
      for (const auto& t : batch) {
        double& cell = table_[static_cast<std::size_t>(t.input * n_actions_ + t.action)];
        const double err = cell - t.target;
        loss += err * err;
        cell += lr * (t.target - cell);
      }
      ++version_;
      return loss / static_cast<double>(batch.size());
    }
    // Perceptron: loss = mean (q - y)^2, gradient averaged over the batch.
    thread_local std::vector<double> grad, q, hidden, x, dq;
    grad.assign(net_->n_params(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& t : batch) {
      const int onehot = encode(t.input, x);
      net_->forward(x, onehot, q, &hidden);
      const double err = q[static_cast<std::size_t>(t.action)] - t.target;
      loss += err * err;
      dq.assign(static_cast<std::size_t>(n_actions_), 0.0);
      dq[static_cast<std::size_t>(t.action)] = 2.0 * err * inv;
      net_->backward(x, onehot, hidden, dq, grad);
    }
    opt_->step(net_->params(), grad, lr);
    ++version_;
    check_finite();
    return loss * inv;
  }

  /// Applies externally computed dL/dq contributions (chain rule through
  /// a mixer). Tabular stores take a plain gradient step; perceptrons an
  /// RMSProp step.
  void apply_q_gradients(const std::vector<QGradSample>& batch, double lr) {
    if (batch.empty()) return;
    if (kind_ == StoreKind::tabular) {
      for (const auto& g : batch) {
        check(g.input, g.action);
        table_[static_cast<std::size_t>(g.input * n_actions_ + g.action)] -= lr * g.dloss_dq;
      }
      ++version_;
      return;
    }
    thread_local std::vector<double> grad, q, hidden, x, dq;
    grad.assign(net_->n_params(), 0.0);
    for (const auto& g : batch) {
      check(g.input, g.action);
      const int onehot = encode(g.input, x);
      net_->forward(x, onehot, q, &hidden);
      dq.assign(static_cast<std::size_t>(n_actions_), 0.0);
      dq[static_cast<std::size_t>(g.action)] = g.dloss_dq;
      net_->backward(x, onehot, hidden, dq, grad);
    }
    opt_->step(net_->params(), grad, lr);
    ++version_;
    check_finite();
  }

  /// Loss and full parameter gradient on a batch, without stepping.
  /// Test hook for finite-difference checks; perceptron-only.
  double loss_and_grad(const std::vector<TargetSample>& batch,
                       std::vector<double>& grad) const {
    if (kind_ != StoreKind::perceptron)
      throw InputError("loss_and_grad: perceptron-only");
    thread_local std::vector<double> q, hidden, x, dq;
    grad.assign(net_->n_params(), 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& t : batch) {
      const int onehot = encode(t.input, x);
      net_->forward(x, onehot, q, &hidden);
      const double err = q[static_cast<std::size_t>(t.action)] - t.target;
      loss += err * err;
      dq.assign(static_cast<std::size_t>(n_actions_), 0.0);
      dq[static_cast<std::size_t>(t.action)] = 2.0 * err * inv;
      net_->backward(x, onehot, hidden, dq, grad);
    }
    return loss * inv;
  }

  std::vector<double>& raw_parameters() {
    return kind_ == StoreKind::tabular ? table_ : net_->params();
  }
  const std::vector<double>& raw_parameters() const {
    return kind_ == StoreKind::tabular ? table_ : net_->params();
  }

  /// Copies parameters from another store of identical shape (target
  /// network sync).
  void copy_parameters_from(const UtilityStore& other) {
    raw_parameters() = other.raw_parameters();
    ++version_;
  }

 private:
  void forward(std::int64_t input, std::vector<double>& q) const {
    thread_local std::vector<double> x;
    const int onehot = encode(input, x);
    net_->forward(x, onehot, q);
  }

  int encode(std::int64_t input, std::vector<double>& x) const {
    if (encoder_.onehot_dim > 0) return static_cast<int>(input);
    encoder_.encode(input, x);
    return -1;
  }

  void check(std::int64_t input, int action) const {
    if (action < 0 || action >= n_actions_)
      throw InputError("UtilityStore: action out of range");
    if (n_inputs_ >= 0 && (input < 0 || input >= n_inputs_))
      throw InputError("UtilityStore: input id out of range: " + std::to_string(input));
  }

  void check_finite() const {
    for (double v : net_->params())
      if (!std::isfinite(v))
        throw DivergenceError("UtilityStore: non-finite parameter after update");
  }

  StoreKind kind_ = StoreKind::tabular;
  std::int64_t n_inputs_ = 0;  // -1 when inputs are raw feature ids
  int n_actions_ = 0;
  std::uint64_t version_ = 0;
  std::vector<double> table_;
  InputEncoder encoder_;
  std::shared_ptr<Perceptron> net_;
  std::shared_ptr<detail::RmsProp> opt_;
};

}  // namespace vdlab
