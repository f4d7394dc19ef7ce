#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "vdlab/replay_buffer.hpp"
#include "vdlab/utility_store.hpp"

using namespace vdlab;

namespace {

TEST(TabularStore, FreshStoreIsZeroEverywhere) {
  auto store = UtilityStore::make_tabular(6, 3);
  for (std::int64_t in = 0; in < 6; ++in)
    for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(store.q_value(in, a), 0.0);
}

TEST(TabularStore, SetThenReadBack) {
  auto store = UtilityStore::make_tabular(6, 3);
  store.set(3, 1, 2.5);
  EXPECT_DOUBLE_EQ(store.q_value(3, 1), 2.5);
  EXPECT_DOUBLE_EQ(store.q_value(3, 0), 0.0);
}

TEST(TabularStore, OutOfRangeRejected) {
  auto store = UtilityStore::make_tabular(6, 3);
  EXPECT_THROW(store.q_value(6, 0), InputError);
  EXPECT_THROW(store.q_value(-1, 0), InputError);
  EXPECT_THROW(store.q_value(0, 3), InputError);
}

TEST(PerceptronStore, ZeroWeightsGiveZeroOutputs) {
  Rng rng(1);
  auto store = UtilityStore::make_perceptron(InputEncoder::one_hot(5), 8, 3, rng);
  std::fill(store.raw_parameters().begin(), store.raw_parameters().end(), 0.0);
  for (std::int64_t in = 0; in < 5; ++in)
    for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(store.q_value(in, a), 0.0);
}

TEST(Greedy, PicksArgmaxAndBreaksTiesLow) {
  auto store = UtilityStore::make_tabular(3, 3);
  store.set(0, 0, 1.0);
  store.set(0, 1, 3.0);
  store.set(0, 2, 2.0);
  EXPECT_EQ(store.greedy(0), 1);
  store.set(1, 0, 2.0);
  store.set(1, 1, 2.0);
  store.set(1, 2, 1.0);
  EXPECT_EQ(store.greedy(1), 0);  // tie -> lowest id
  EXPECT_EQ(store.greedy(2), 0);  // all-zero -> action 0
}

TEST(Greedy, InvariantUnderConstantShift) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto store = UtilityStore::make_tabular(1, 5);
    for (int a = 0; a < 5; ++a) store.set(0, a, rng.uniform_real(-2, 2));
    const int before = store.greedy(0);
    const double c = rng.uniform_real(-10, 10);
    for (int a = 0; a < 5; ++a) store.set(0, a, store.q_value(0, a) + c);
    EXPECT_EQ(store.greedy(0), before);
  }
}

TEST(EpsilonGreedy, ZeroEpsilonEqualsGreedy) {
  auto store = UtilityStore::make_tabular(1, 4);
  store.set(0, 2, 1.0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(store.epsilon_greedy(0, 0.0, rng), 2);
}

TEST(EpsilonGreedy, FullExplorationIsUniform) {
  auto store = UtilityStore::make_tabular(1, 3);
  Rng rng(4);
  int counts[3] = {0, 0, 0};
  const int draws = 30000;
  for (int i = 0; i < draws; ++i) ++counts[store.epsilon_greedy(0, 1.0, rng)];
  for (int a = 0; a < 3; ++a)
    EXPECT_NEAR(static_cast<double>(counts[a]) / draws, 1.0 / 3.0, 0.01);
}

TEST(EpsilonGreedy, GreedyDominatesAtLowEpsilon) {
  auto store = UtilityStore::make_tabular(1, 4);
  store.set(0, 1, 5.0);
  Rng rng(5);
  int greedy_count = 0;
  const int draws = 30000;
  for (int i = 0; i < draws; ++i)
    if (store.epsilon_greedy(0, 0.1, rng) == 1) ++greedy_count;
  EXPECT_GE(static_cast<double>(greedy_count) / draws, 0.9);
}

TEST(EpsilonGreedy, RejectsOutOfRangeEpsilon) {
  auto store = UtilityStore::make_tabular(1, 2);
  Rng rng(6);
  EXPECT_THROW(store.epsilon_greedy(0, -0.1, rng), InputError);
  EXPECT_THROW(store.epsilon_greedy(0, 1.5, rng), InputError);
}

TEST(GradientStep, TabularMovesByLearningRateFraction) {
  auto store = UtilityStore::make_tabular(1, 2);
  const double loss = store.gradient_step({{0, 0, 1.0}}, 0.5);
  EXPECT_DOUBLE_EQ(loss, 1.0);
  EXPECT_DOUBLE_EQ(store.q_value(0, 0), 0.5);
}

TEST(GradientStep, FixedPointWhenTargetMatches) {
  auto store = UtilityStore::make_tabular(1, 2);
  store.set(0, 1, 0.7);
  const double loss = store.gradient_step({{0, 1, 0.7}}, 0.5);
  EXPECT_DOUBLE_EQ(loss, 0.0);
  EXPECT_DOUBLE_EQ(store.q_value(0, 1), 0.7);
}

TEST(GradientStep, TabularUnitRateSetsTargetsExactly) {
  Rng rng(7);
  auto store = UtilityStore::make_tabular(8, 4);
  std::vector<TargetSample> batch;
  for (std::int64_t in = 0; in < 8; ++in)
    batch.push_back({in, rng.uniform_int(4), rng.uniform_real(-3, 3)});
  store.gradient_step(batch, 1.0);
  for (const auto& t : batch) EXPECT_DOUBLE_EQ(store.q_value(t.input, t.action), t.target);
}

TEST(GradientStep, RejectsNonFiniteTargets) {
  auto store = UtilityStore::make_tabular(1, 2);
  EXPECT_THROW(store.gradient_step({{0, 0, std::nan("")}}, 0.5), DivergenceError);
}

TEST(GradientStep, PerceptronDescendsOnRepeatedBatch) {
  Rng rng(8);
  auto store = UtilityStore::make_perceptron(InputEncoder::one_hot(4), 16, 3, rng);
  const std::vector<TargetSample> batch = {{0, 1, 1.5}, {2, 0, -0.5}};
  const double first = store.gradient_step(batch, 5e-4);
  double last = first;
  for (int i = 0; i < 50; ++i) last = store.gradient_step(batch, 5e-4);
  EXPECT_LT(last, first);
}

TEST(GradientCheck, AnalyticMatchesCentralDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int input_dim = 2 + rng.uniform_int(5);
    const int hidden = 3 + rng.uniform_int(6);
    const int n_actions = 2 + rng.uniform_int(3);
    const bool one_hot = rng.bernoulli(0.5);

    InputEncoder enc;
    std::vector<std::vector<double>> feature_table(4);
    if (one_hot) {
      enc = InputEncoder::one_hot(input_dim);
    } else {
      for (auto& row : feature_table) {
        row.resize(static_cast<std::size_t>(input_dim));
        for (auto& v : row) v = rng.uniform_real(-1, 1);
      }
      enc = InputEncoder::features(
          input_dim, [&feature_table](std::int64_t id, std::vector<double>& out) {
            out = feature_table[static_cast<std::size_t>(id)];
          });
    }
    auto store = UtilityStore::make_perceptron(std::move(enc), hidden, n_actions,
                                               rng.split(trial));
    std::vector<TargetSample> batch;
    const int batch_size = 1 + rng.uniform_int(4);
    for (int b = 0; b < batch_size; ++b)
      batch.push_back({one_hot ? rng.uniform_int(input_dim) : rng.uniform_int(4),
                       rng.uniform_int(n_actions), rng.uniform_real(-2, 2)});

    std::vector<double> analytic;
    store.loss_and_grad(batch, analytic);
    auto& params = store.raw_parameters();
    const double h = 1e-5;
    std::vector<double> scratch;
    for (std::size_t w = 0; w < params.size(); ++w) {
      const double saved = params[w];
      params[w] = saved + h;
      const double up = store.loss_and_grad(batch, scratch);
      params[w] = saved - h;
      const double down = store.loss_and_grad(batch, scratch);
      params[w] = saved;
      const double fd = (up - down) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[w]), 1e-6});
      EXPECT_LT(std::abs(fd - analytic[w]) / denom, 1e-4)
          << "trial " << trial << " weight " << w;
    }
  }
}

TEST(ReplayBuffer, RingEvictsOldest) {
  ReplayBuffer buf(2);
  Transition a, b, c;
  a.reward = 1;
  b.reward = 2;
  c.reward = 3;
  buf.push(a);
  buf.push(b);
  buf.push(c);
  EXPECT_EQ(buf.size(), 2u);
  std::set<double> rewards;
  for (const auto& t : buf.entries()) rewards.insert(t.reward);
  EXPECT_EQ(rewards, (std::set<double>{2.0, 3.0}));
}

TEST(ReplayBuffer, SizeGrowsToCapacity) {
  ReplayBuffer buf(5000);
  Transition t;
  buf.push(t);
  EXPECT_EQ(buf.size(), 1u);
  for (int i = 0; i < 4999; ++i) buf.push(t);
  EXPECT_EQ(buf.size(), 5000u);
  for (int i = 0; i < 123; ++i) buf.push(t);
  EXPECT_EQ(buf.size(), 5000u);
}

TEST(ReplayBuffer, UnderfilledIsNotReady) {
  ReplayBuffer buf(100);
  Transition t;
  for (int i = 0; i < 10; ++i) buf.push(t);
  EXPECT_FALSE(buf.ready(32));
  Rng rng(1);
  EXPECT_THROW(buf.sample(32, rng), InputError);
}

TEST(ReplayBuffer, SingleEntrySampling) {
  ReplayBuffer buf(4);
  Transition t;
  t.reward = 42.0;
  buf.push(t);
  Rng rng(2);
  const auto batch = buf.sample(1, rng);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_DOUBLE_EQ(batch[0].reward, 42.0);
}

TEST(ReplayBuffer, SamplingIsSeedDeterministic) {
  ReplayBuffer buf(64);
  for (int i = 0; i < 64; ++i) {
    Transition t;
    t.reward = i;
    buf.push(t);
  }
  Rng rng_a(3), rng_b(3);
  const auto batch_a = buf.sample(32, rng_a);
  const auto batch_b = buf.sample(32, rng_b);
  for (std::size_t i = 0; i < batch_a.size(); ++i)
    EXPECT_DOUBLE_EQ(batch_a[i].reward, batch_b[i].reward);
}

TEST(ReplayBuffer, NeverReturnsUnpushedTransitions) {
  Rng rng(4);
  ReplayBuffer buf(50);
  std::set<double> pushed;
  for (int round = 0; round < 300; ++round) {
    Transition t;
    t.reward = rng.uniform_real(0, 1);
    pushed.insert(t.reward);
    buf.push(t);
    if (buf.ready(8)) {
      for (const auto& s : buf.sample(8, rng))
        EXPECT_TRUE(pushed.count(s.reward)) << "sampled a never-pushed transition";
    }
  }
}

}  // namespace
