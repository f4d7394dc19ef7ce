#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vdlab/decpomdp.hpp"
#include "vdlab/errors.hpp"
#include "vdlab/rng.hpp"
#include "vdlab/utility_store.hpp"

namespace vdlab {

enum class MixerKind { additive, monotonic };

/// Weights of the mixing layers for one state, as produced by the
/// hypernetworks (pre-absolute-value).
struct MixParams {
  std::vector<double> w1;  // n_agents x embed, row-major
  std::vector<double> b1;  // embed
  std::vector<double> w2;  // embed
  double b2 = 0.0;
};

namespace detail {

inline double elu(double z) { return z > 0 ? z : std::expm1(z); }
inline double elu_grad(double z) { return z > 0 ? 1.0 : std::exp(z); }

/// Linear-ReLU-Linear generator used for each hypernetwork head.
struct HyperHead {
  int in = 0, hidden = 0, out = 0;
  std::size_t offset = 0;  // into the mixer's flat parameter vector

  std::size_t count() const {
    return static_cast<std::size_t>(hidden * in + hidden + out * hidden + out);
  }
  std::size_t w1_off() const { return offset; }
  std::size_t b1_off() const { return offset + static_cast<std::size_t>(hidden * in); }
  std::size_t w2_off() const { return b1_off() + static_cast<std::size_t>(hidden); }
  std::size_t b2_off() const { return w2_off() + static_cast<std::size_t>(out * hidden); }

  void forward(const std::vector<double>& params, const std::vector<double>& x,
               std::vector<double>& h, std::vector<double>& y) const {
    h.assign(static_cast<std::size_t>(hidden), 0.0);
    for (int j = 0; j < hidden; ++j) {
      double acc = params[b1_off() + static_cast<std::size_t>(j)];
      const double* row = &params[w1_off() + static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
      h[static_cast<std::size_t>(j)] = acc > 0 ? acc : 0.0;
    }
    y.assign(static_cast<std::size_t>(out), 0.0);
    for (int o = 0; o < out; ++o) {
      double acc = params[b2_off() + static_cast<std::size_t>(o)];
      const double* row = &params[w2_off() + static_cast<std::size_t>(o) * hidden];
      for (int j = 0; j < hidden; ++j) acc += row[j] * h[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(o)] = acc;
    }
  }

  /// Accumulates parameter gradients given dL/dy; h is the forward hidden.
  void backward(const std::vector<double>& params, const std::vector<double>& x,
                const std::vector<double>& h, const std::vector<double>& dy,
                std::vector<double>& grad) const {
    thread_local std::vector<double> dh;
    dh.assign(static_cast<std::size_t>(hidden), 0.0);
    for (int o = 0; o < out; ++o) {
      const double g = dy[static_cast<std::size_t>(o)];
      if (g == 0.0) continue;
      grad[b2_off() + static_cast<std::size_t>(o)] += g;
      double* gw = &grad[w2_off() + static_cast<std::size_t>(o) * hidden];
      const double* w = &params[w2_off() + static_cast<std::size_t>(o) * hidden];
      for (int j = 0; j < hidden; ++j) {
        gw[j] += g * h[static_cast<std::size_t>(j)];
        dh[static_cast<std::size_t>(j)] += g * w[j];
      }
    }
    for (int j = 0; j < hidden; ++j) {
      if (h[static_cast<std::size_t>(j)] <= 0) continue;
      const double g = dh[static_cast<std::size_t>(j)];
      if (g == 0.0) continue;
      grad[b1_off() + static_cast<std::size_t>(j)] += g;
      double* gw = &grad[w1_off() + static_cast<std::size_t>(j) * in];
      for (int i = 0; i < in; ++i) gw[i] += g * x[static_cast<std::size_t>(i)];
    }
  }
};

}  // namespace detail

/// Combines per-agent utilities into a joint value conditioned on the
/// global state. The monotonic kind is a two-layer mixing network whose
/// weights are generated from state features and made nonnegative with an
/// absolute value, so the joint argmax factorizes into per-agent
/// argmaxes. The additive kind is the plain sum, the smallest structure
/// with that property.
class Mixer {
 public:
  static Mixer make_additive(int n_agents) {
    Mixer m;
    m.kind_ = MixerKind::additive;
    m.n_agents_ = n_agents;
    return m;
  }

  static Mixer make_monotonic(int n_agents, int state_dim, Rng init_rng,
                              int embed_dim = 32, int hyper_hidden = 64,
                              double rms_alpha = 0.99, double rms_eps = 1e-5) {
    Mixer m;
    m.kind_ = MixerKind::monotonic;
    m.n_agents_ = n_agents;
    m.state_dim_ = state_dim;
    m.embed_dim_ = embed_dim;
    if (n_agents < 1 || state_dim < 1 || embed_dim < 1 || hyper_hidden < 1)
      throw InputError("Mixer: bad dimensions");
    auto head = [&](int out, std::size_t offset) {
      detail::HyperHead h;
      h.in = state_dim;
      h.hidden = hyper_hidden;
      h.out = out;
      h.offset = offset;
      return h;
    };
    std::size_t off = 0;
    m.head_w1_ = head(n_agents * embed_dim, off);
    off += m.head_w1_.count();
    m.head_b1_ = head(embed_dim, off);
    off += m.head_b1_.count();
    m.head_w2_ = head(embed_dim, off);
    off += m.head_w2_.count();
    m.head_b2_ = head(1, off);
    off += m.head_b2_.count();
    m.params_.assign(off, 0.0);
    for (const auto* h : {&m.head_w1_, &m.head_b1_, &m.head_w2_, &m.head_b2_}) {
      const double s1 = 1.0 / std::sqrt(static_cast<double>(h->in));
      for (std::size_t i = 0; i < static_cast<std::size_t>(h->hidden * h->in); ++i)
        m.params_[h->w1_off() + i] = init_rng.uniform_real(-s1, s1);
      const double s2 = 1.0 / std::sqrt(static_cast<double>(h->hidden));
      for (std::size_t i = 0; i < static_cast<std::size_t>(h->out * h->hidden); ++i)
        m.params_[h->w2_off() + i] = init_rng.uniform_real(-s2, s2);
    }
    m.opt_ = std::make_shared<detail::RmsProp>(m.params_.size(), rms_alpha, rms_eps);
    return m;
  }

  MixerKind kind() const { return kind_; }
  int n_agents() const { return n_agents_; }
  int embed_dim() const { return embed_dim_; }
  int state_dim() const { return state_dim_; }
  int hyper_hidden() const { return kind_ == MixerKind::monotonic ? head_b1_.hidden : 0; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// The generated mixing weights for one state.
  MixParams generate(const std::vector<double>& state_features) const {
    require_monotonic();
    check_state(state_features);
    MixParams p;
    thread_local std::vector<double> h;
    head_w1_.forward(params_, state_features, h, p.w1);
    head_b1_.forward(params_, state_features, h, p.b1);
    head_w2_.forward(params_, state_features, h, p.w2);
    thread_local std::vector<double> b2;
    head_b2_.forward(params_, state_features, h, b2);
    p.b2 = b2[0];
    return p;
  }

  /// The mixing computation itself, exposed so tests can drive it with
  /// hand-picked generated weights. |w1|,|w2| keep the map monotone in
  /// the utilities.
  static double mix_core(const MixParams& p, const std::vector<double>& utilities,
                         int embed_dim) {
    const int n = static_cast<int>(utilities.size());
    double total = p.b2;
    for (int j = 0; j < embed_dim; ++j) {
      double z = p.b1[static_cast<std::size_t>(j)];
      for (int i = 0; i < n; ++i)
        z += utilities[static_cast<std::size_t>(i)] *
             std::abs(p.w1[static_cast<std::size_t>(i * embed_dim + j)]);
      total += detail::elu(z) * std::abs(p.w2[static_cast<std::size_t>(j)]);
    }
    return total;
  }

  double mix(const std::vector<double>& utilities,
             const std::vector<double>& state_features) const {
    check_utilities(utilities);
    if (kind_ == MixerKind::additive) {
      double total = 0.0;
      for (double q : utilities) total += q;
      return total;
    }
    return mix_core(generate(state_features), utilities, embed_dim_);
  }

  struct Gradient {
    double value = 0.0;                // mixed joint value
    std::vector<double> dutilities;    // dQ/dq_i, nonnegative for monotonic
    std::vector<double> dparams;       // dQ/dtheta (empty for additive)
  };

  /// Value plus analytic gradients with respect to the utilities and the
  /// hypernetwork parameters.
  Gradient mix_gradient(const std::vector<double>& utilities,
                        const std::vector<double>& state_features) const {
    Gradient g;
    if (kind_ == MixerKind::monotonic) g.dparams.assign(params_.size(), 0.0);
    g.value = backward_into(utilities, state_features, 1.0, g.dutilities,
                            kind_ == MixerKind::monotonic ? &g.dparams : nullptr);
    return g;
  }

  /// Core of mix_gradient: returns the mixed value, writes
  /// upstream * dQ/dq_i into dutilities and accumulates
  /// upstream * dQ/dtheta into *dparams_accum when given. Lets a batched
  /// caller chain its loss gradient without per-sample allocation.
  double backward_into(const std::vector<double>& utilities,
                       const std::vector<double>& state_features, double upstream,
                       std::vector<double>& dutilities,
                       std::vector<double>* dparams_accum) const {
    check_utilities(utilities);
    if (kind_ == MixerKind::additive) {
      double value = 0.0;
      for (double q : utilities) value += q;
      dutilities.assign(utilities.size(), upstream);
      return value;
    }
    check_state(state_features);
    const int n = n_agents_, E = embed_dim_;

    // forward through all four heads, keeping hidden activations
    thread_local std::vector<double> h_w1, h_b1, h_w2, h_b2, y_b2;
    MixParams p;
    head_w1_.forward(params_, state_features, h_w1, p.w1);
    head_b1_.forward(params_, state_features, h_b1, p.b1);
    head_w2_.forward(params_, state_features, h_w2, p.w2);
    head_b2_.forward(params_, state_features, h_b2, y_b2);
    p.b2 = y_b2[0];

    thread_local std::vector<double> z, hidden;
    z.assign(static_cast<std::size_t>(E), 0.0);
    hidden.assign(static_cast<std::size_t>(E), 0.0);
    double value = p.b2;
    for (int j = 0; j < E; ++j) {
      double zj = p.b1[static_cast<std::size_t>(j)];
      for (int i = 0; i < n; ++i)
        zj += utilities[static_cast<std::size_t>(i)] *
              std::abs(p.w1[static_cast<std::size_t>(i * E + j)]);
      z[static_cast<std::size_t>(j)] = zj;
      hidden[static_cast<std::size_t>(j)] = detail::elu(zj);
      value += hidden[static_cast<std::size_t>(j)] *
               std::abs(p.w2[static_cast<std::size_t>(j)]);
    }

    // backward: utilities
    dutilities.assign(static_cast<std::size_t>(n), 0.0);
    thread_local std::vector<double> dz;
    dz.assign(static_cast<std::size_t>(E), 0.0);
    for (int j = 0; j < E; ++j) {
      dz[static_cast<std::size_t>(j)] =
          std::abs(p.w2[static_cast<std::size_t>(j)]) *
          detail::elu_grad(z[static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < E; ++j)
        acc += std::abs(p.w1[static_cast<std::size_t>(i * E + j)]) *
               dz[static_cast<std::size_t>(j)];
      dutilities[static_cast<std::size_t>(i)] = upstream * acc;
    }

    if (dparams_accum) {
      // backward: generated weights, then through the heads
      thread_local std::vector<double> d_w1, d_b1, d_w2, d_b2;
      d_w1.assign(static_cast<std::size_t>(n * E), 0.0);
      d_b1.assign(static_cast<std::size_t>(E), 0.0);
      d_w2.assign(static_cast<std::size_t>(E), 0.0);
      d_b2.assign(1, upstream);
      for (int j = 0; j < E; ++j) {
        const double w2j = p.w2[static_cast<std::size_t>(j)];
        d_w2[static_cast<std::size_t>(j)] =
            upstream * hidden[static_cast<std::size_t>(j)] *
            (w2j > 0 ? 1.0 : (w2j < 0 ? -1.0 : 0.0));
        d_b1[static_cast<std::size_t>(j)] = upstream * dz[static_cast<std::size_t>(j)];
        for (int i = 0; i < n; ++i) {
          const double w1ij = p.w1[static_cast<std::size_t>(i * E + j)];
          d_w1[static_cast<std::size_t>(i * E + j)] =
              upstream * utilities[static_cast<std::size_t>(i)] *
              dz[static_cast<std::size_t>(j)] *
              (w1ij > 0 ? 1.0 : (w1ij < 0 ? -1.0 : 0.0));
        }
      }
      head_w1_.backward(params_, state_features, h_w1, d_w1, *dparams_accum);
      head_b1_.backward(params_, state_features, h_b1, d_b1, *dparams_accum);
      head_w2_.backward(params_, state_features, h_w2, d_w2, *dparams_accum);
      head_b2_.backward(params_, state_features, h_b2, d_b2, *dparams_accum);
    }
    return value;
  }

  /// One RMSProp step on an externally accumulated dL/dparams.
  void apply_gradient(const std::vector<double>& grad, double lr) {
    require_monotonic();
    if (grad.size() != params_.size()) throw InputError("Mixer: gradient size mismatch");
    opt_->step(params_, grad, lr);
    for (double v : params_)
      if (!std::isfinite(v)) throw DivergenceError("Mixer: non-finite parameter");
  }

  void copy_parameters_from(const Mixer& other) { params_ = other.params_; }

 private:
  void require_monotonic() const {
    if (kind_ != MixerKind::monotonic)
      throw InputError("Mixer: operation requires the monotonic kind");
  }
  void check_utilities(const std::vector<double>& utilities) const {
    if (static_cast<int>(utilities.size()) != n_agents_)
      throw InputError("Mixer: utilities length mismatch");
  }
  void check_state(const std::vector<double>& state_features) const {
    if (static_cast<int>(state_features.size()) != state_dim_)
      throw InputError("Mixer: state feature length mismatch");
  }

  MixerKind kind_ = MixerKind::additive;
  int n_agents_ = 0;
  int state_dim_ = 0;
  int embed_dim_ = 0;
  detail::HyperHead head_w1_, head_b1_, head_w2_, head_b2_;
  std::vector<double> params_;
  std::shared_ptr<detail::RmsProp> opt_;
};

/// Whether TD inputs come from per-agent observation histories or from
/// the global state.
enum class InputMode { history, global_state };

struct TdTargetBatch {
  std::vector<double> targets;
  std::vector<std::vector<double>> bootstrap_values;  // per element, per agent
  std::vector<double> rewards;
  std::vector<char> terminals;
};

/// Bootstrapped targets r + gamma * mix(max_a q_1, ..., max_a q_n) at the
/// successor, with the double-Q rule: online stores choose the argmax
/// action, target stores supply its value. Terminal elements use the bare
/// reward. The mixer is conditioned on the successor global state.
template <class StateFeatureFn>
TdTargetBatch td_target(const std::vector<Transition>& batch,
                        const std::vector<UtilityStore>& online_stores,
                        const std::vector<UtilityStore>& target_stores,
                        const Mixer& target_mixer, double gamma, InputMode mode,
                        StateFeatureFn&& state_features) {
  const int n = static_cast<int>(online_stores.size());
  if (static_cast<int>(target_stores.size()) != n)
    throw ConfigError("td_target: online/target store count mismatch");
  TdTargetBatch out;
  out.targets.reserve(batch.size());
  out.bootstrap_values.reserve(batch.size());
  thread_local std::vector<double> features;
  for (const Transition& t : batch) {
    if (mode == InputMode::history &&
        static_cast<int>(t.next_inputs.size()) != n)
      throw ConfigError("td_target: batch lacks history inputs for learner mode");
    out.rewards.push_back(t.reward);
    out.terminals.push_back(t.terminal ? 1 : 0);
    std::vector<double> boot(static_cast<std::size_t>(n), 0.0);
    if (!t.terminal) {
      for (int i = 0; i < n; ++i) {
        const std::int64_t input = mode == InputMode::history
                                       ? t.next_inputs[static_cast<std::size_t>(i)]
                                       : t.next_state;
        const int a = online_stores[static_cast<std::size_t>(i)].greedy(input);
        boot[static_cast<std::size_t>(i)] =
            target_stores[static_cast<std::size_t>(i)].q_value(input, a);
      }
    }
    double target = t.reward;
    if (!t.terminal) {
      state_features(t.next_state, features);
      target += gamma * target_mixer.mix(boot, features);
    }
    out.targets.push_back(target);
    out.bootstrap_values.push_back(std::move(boot));
  }
  return out;
}

}  // namespace vdlab
