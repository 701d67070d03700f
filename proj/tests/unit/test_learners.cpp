#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "chain.hpp"
#include "oracles.hpp"
#include "plab/error.hpp"
#include "plab/learners/c51.hpp"
#include "plab/learners/ppo.hpp"

using namespace plab;
using namespace plab::learners;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  RngStream s(seed, 5);
  std::vector<double> v(n);
  for (double& x : v) x = s.normal(0.0, sd);
  return v;
}

std::vector<double> random_distribution(std::size_t n, RngStream& s) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) total += (x = s.uniform01() * (s.uniform01() < 0.3 ? 0.0 : 1.0) + 1e-12);
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

// --- GAE ----------------------------------------------------------------------------------

TEST(Gae, MatchesDoubleSum) {
  RngStream s(1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + s.below(200);
    const auto r = normals(n, 100 + trial);
    const auto v = normals(n, 200 + trial);
    std::vector<bool> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = s.uniform01() < 0.05;
    const double boot = s.normal(0.0, 1.0);
    const auto got = gae(r, v, d, boot, 0.99, 0.95);
    const auto want = oracle::gae(r, v, d, boot, 0.99, 0.95);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_NEAR(got.advantages[i], want[i], 1e-10);
      ASSERT_NEAR(got.returns[i], want[i] + v[i], 1e-10);
    }
  }
}

TEST(Gae, LambdaOneIsDiscountedReturnMinusValue) {
  const std::vector<double> r{1.0, 0.0, 2.0, -1.0};
  const std::vector<double> v{0.5, 0.1, -0.2, 0.3};
  const std::vector<bool> d{false, false, false, false};
  const auto got = gae(r, v, d, 4.0, 0.9, 1.0);
  double ret = 4.0;
  for (int t = 3; t >= 0; --t) {
    ret = r[t] + 0.9 * ret;
    EXPECT_NEAR(got.advantages[t], ret - v[t], 1e-12);
  }
}

// --- PPO loss -----------------------------------------------------------------------------

TEST(PpoLoss, ZeroPolicyLossAtOldParameters) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const std::size_t n = 257;
    const auto lp = normals(n, seed);
    const auto val = normals(n, seed + 10);
    const auto adv = normals(n, seed + 20, 3.0);
    const auto ret = normals(n, seed + 30);
    const std::vector<double> ent(n, 0.7);
    const auto L = ppo_loss(lp, val, adv, ret, lp, val, ent, PpoLossConfig{});
    EXPECT_NEAR(L.policy, 0.0, 1e-8);
    EXPECT_NEAR(L.approx_kl, 0.0, 1e-15);
    EXPECT_EQ(L.clip_fraction, 0.0);
  }
}

TEST(PpoLoss, TermByTermOracle) {
  const std::size_t n = 64;
  const auto old_lp = normals(n, 4, 0.5);
  auto new_lp = old_lp;
  const auto shift = normals(n, 5, 0.3);
  for (std::size_t i = 0; i < n; ++i) new_lp[i] += shift[i];
  const auto old_v = normals(n, 6);
  auto new_v = old_v;
  const auto vshift = normals(n, 7, 0.4);
  for (std::size_t i = 0; i < n; ++i) new_v[i] += vshift[i];
  const auto adv = normals(n, 8);
  const auto ret = normals(n, 9);
  const auto ent = normals(n, 10);
  PpoLossConfig cfg;
  cfg.normalize_advantages = false;
  const auto L = ppo_loss(old_lp, old_v, adv, ret, new_lp, new_v, ent, cfg);

  double pol = 0.0, val = 0.0, en = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = std::exp(new_lp[i] - old_lp[i]);
    pol += -std::min(rho * adv[i], std::clamp(rho, 0.8, 1.2) * adv[i]) / n;
    const double vc = old_v[i] + std::clamp(new_v[i] - old_v[i], -0.2, 0.2);
    val += std::max(std::pow(new_v[i] - ret[i], 2), std::pow(vc - ret[i], 2)) / n;
    en += ent[i] / n;
  }
  EXPECT_NEAR(L.policy, pol, 1e-12);
  EXPECT_NEAR(L.value, val, 1e-12);
  EXPECT_NEAR(L.entropy, en, 1e-12);
  EXPECT_NEAR(L.total, pol + 0.5 * val - 0.01 * en, 1e-12);
  EXPECT_GT(L.clip_fraction, 0.0);
}

TEST(PpoLoss, GradientsMatchFiniteDifferences) {
  const std::size_t n = 40;
  const auto old_lp = normals(n, 11, 0.5);
  auto new_lp = old_lp;
  const auto shift = normals(n, 12, 0.3);
  for (std::size_t i = 0; i < n; ++i) new_lp[i] += shift[i];
  const auto old_v = normals(n, 13);
  auto new_v = old_v;
  const auto vshift = normals(n, 14, 0.4);
  for (std::size_t i = 0; i < n; ++i) new_v[i] += vshift[i];
  const auto adv = normals(n, 15);
  const auto ret = normals(n, 16);
  const std::vector<double> ent(n, 0.5);
  const auto L = ppo_loss(old_lp, old_v, adv, ret, new_lp, new_v, ent, PpoLossConfig{});
  auto total = [&] { return ppo_loss(old_lp, old_v, adv, ret, new_lp, new_v, ent, PpoLossConfig{}).total; };
  const auto fd_lp = oracle::central_differences(total, new_lp, 1e-7);
  const auto fd_v = oracle::central_differences(total, new_v, 1e-7);
  EXPECT_LT(oracle::relative_error(L.d_log_prob, fd_lp), 1e-6);
  EXPECT_LT(oracle::relative_error(L.d_value, fd_v), 1e-6);
}

TEST(PpoLoss, RejectsBadInputs) {
  const std::vector<double> a{0.0}, b{0.0, 1.0};
  EXPECT_THROW(ppo_loss(a, a, a, a, b, a, a, PpoLossConfig{}), InvalidInput);
  const std::vector<double> big{800.0};
  EXPECT_THROW(ppo_loss(a, a, a, a, big, a, a, PpoLossConfig{}), NumericError);
}

// --- policy distributions -----------------------------------------------------------------

TEST(CategoricalPolicy, GradientsMatchFiniteDifferences) {
  auto logits = normals(6, 17);
  for (std::size_t a = 0; a < 6; ++a) {
    const auto e = categorical_policy(logits, a);
    const auto fd_lp = oracle::central_differences([&] { return categorical_policy(logits, a).log_prob; }, logits, 1e-6);
    const auto fd_h = oracle::central_differences([&] { return categorical_policy(logits, a).entropy; }, logits, 1e-6);
    EXPECT_LT(oracle::relative_error(e.d_log_prob, fd_lp), 1e-7);
    EXPECT_LT(oracle::relative_error(e.d_entropy, fd_h), 1e-7);
  }
  const std::vector<double> flat(4, 0.3);
  EXPECT_NEAR(categorical_policy(flat, 0).entropy, std::log(4.0), 1e-12);
  EXPECT_NEAR(categorical_policy(flat, 2).log_prob, -std::log(4.0), 1e-12);
}

TEST(CategoricalPolicy, SamplingFrequencies) {
  const std::vector<double> logits{0.0, std::log(3.0)};
  RngStream s(2, 2);
  int ones = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ones += sample_categorical(logits, s) == 1;
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.75, 0.01);
}

TEST(GaussianPolicy, GradientsAndClosedForms) {
  auto mean = normals(3, 18);
  auto log_std = normals(3, 19, 0.3);
  const auto action = normals(3, 20);
  const auto e = gaussian_policy(mean, log_std, action);
  double lp = 0.0, h = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double sd = std::exp(log_std[i]);
    lp += -0.5 * std::pow((action[i] - mean[i]) / sd, 2) - log_std[i] - 0.5 * std::log(2 * M_PI);
    h += log_std[i] + 0.5 * std::log(2 * M_PI * M_E);
  }
  EXPECT_NEAR(e.log_prob, lp, 1e-12);
  EXPECT_NEAR(e.entropy, h, 1e-12);
  const auto fd_m = oracle::central_differences([&] { return gaussian_policy(mean, log_std, action).log_prob; }, mean, 1e-6);
  const auto fd_s =
      oracle::central_differences([&] { return gaussian_policy(mean, log_std, action).log_prob; }, log_std, 1e-6);
  EXPECT_LT(oracle::relative_error(e.d_mean, fd_m), 1e-7);
  EXPECT_LT(oracle::relative_error(e.d_log_std, fd_s), 1e-7);
}

TEST(PpoAgent, LearnsABandit) {
  std::vector<net::LayerSpec> specs{{1, 16, net::Activation::tanh, false, net::InitScheme::orthogonal(1.0)},
                                    {16, 3, net::Activation::linear, false, net::InitScheme::orthogonal(0.01)}};
  RngStream init(3, 0), act(3, 1), upd(3, 2);
  PpoConfig cfg;
  cfg.lr = 3e-3;
  PpoAgent agent(net::Network::create(specs, init), 2, false, cfg, std::make_unique<mitigations::Adam>());
  const std::vector<double> obs{1.0};
  for (int iter = 0; iter < 30; ++iter) {
    TrajectoryBatch b;
    b.observations = Matrix(64, 1, 1.0);
    for (int i = 0; i < 64; ++i) {
      const auto step = agent.act(obs, act);
      b.actions.push_back(step.action);
      b.rewards.push_back(step.action == 1 ? 1.0 : 0.0);
      b.dones.push_back(true);
      b.log_probs.push_back(step.log_prob);
      b.values.push_back(step.value);
    }
    const auto stats = agent.update(b, 0.0, upd);
    EXPECT_EQ(stats.gradient_steps, cfg.epochs * cfg.minibatches);
  }
  const auto out = agent.network().predict(Matrix(1, 1, 1.0));
  const double p1 = 1.0 / (1.0 + std::exp(out(0, 0) - out(0, 1)));
  EXPECT_GT(p1, 0.9);
  EXPECT_EQ(agent.act_greedy(obs).action, 1u);
}

TEST(PpoAgent, ContinuousOutputsAndValidation) {
  std::vector<net::LayerSpec> specs{{2, 8, net::Activation::tanh, false, net::InitScheme::orthogonal(1.0)},
                                    {8, 3, net::Activation::linear, false, net::InitScheme::orthogonal(0.01)}};
  RngStream init(4, 0);
  PpoConfig cfg;
  cfg.init_log_std = -0.5;
  PpoAgent agent(net::Network::create(specs, init), 2, true, cfg, std::make_unique<mitigations::Adam>());
  EXPECT_EQ(agent.log_std(), (std::vector<double>{-0.5, -0.5}));
  RngStream s(1, 1);
  const std::vector<double> obs{0.1, -0.2};
  EXPECT_EQ(agent.act(obs, s).action_vector.size(), 2u);
  RngStream i2(4, 0);
  EXPECT_THROW(PpoAgent(net::Network::create(specs, i2), 3, true, cfg, std::make_unique<mitigations::Adam>()),
               SpecError);
}

// --- C51 ----------------------------------------------------------------------------------

TEST(C51Support, EndpointsAndSpacing) {
  const auto z = c51_support(-10.0, 10.0, 51);
  ASSERT_EQ(z.size(), 51u);
  EXPECT_EQ(z.front(), -10.0);
  EXPECT_EQ(z.back(), 10.0);
  const auto head = CategoricalHead::make(-10.0, 10.0, 51);
  EXPECT_NEAR(head.delta_z, 0.4, 1e-15);
  for (std::size_t i = 1; i < z.size(); ++i) EXPECT_NEAR(z[i] - z[i - 1], 0.4, 1e-12);
  EXPECT_THROW(c51_support(1.0, 1.0, 51), InvalidInput);
  EXPECT_THROW(c51_support(-1.0, 1.0, 1), InvalidInput);
}

TEST(C51Projection, MatchesKernelOracleAndConservesMass) {
  const auto head = CategoricalHead::make(-10.0, 10.0, 51);
  RngStream s(6, 6);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto p = random_distribution(51, s);
    const double r = s.uniform(-15.0, 15.0);
    const bool done = s.uniform01() < 0.2;
    const double gamma = s.uniform01() < 0.1 ? 1.0 : s.uniform(0.0, 1.0);
    const auto m = categorical_projection(p, r, done, gamma, head);
    const auto want = oracle::projection(p, r, done, gamma, -10.0, 10.0);
    double mass = 0.0;
    for (std::size_t i = 0; i < 51; ++i) {
      ASSERT_NEAR(m[i], want[i], 1e-10) << trial;
      ASSERT_GE(m[i], 0.0);
      mass += m[i];
    }
    ASSERT_NEAR(mass, 1.0, 1e-6);
  }
}

TEST(C51Projection, AtomAlignedShiftIsExact) {
  const auto head = CategoricalHead::make(-10.0, 10.0, 51);
  std::vector<double> p(51, 0.0);
  p[25] = 1.0;  // z = 0
  const auto m = categorical_projection(p, 0.8, false, 0.99, head);
  EXPECT_NEAR(m[27], 1.0, 1e-12);
  const auto terminal = categorical_projection(p, 100.0, true, 0.99, head);
  EXPECT_EQ(terminal[50], 1.0);
  std::vector<double> bad(51, 0.1);
  EXPECT_THROW(categorical_projection(bad, 0.0, false, 0.99, head), InvalidInput);
}

TEST(C51Loss, CrossEntropyGradient) {
  auto logits = normals(11, 21);
  RngStream s(7, 7);
  const auto m = random_distribution(11, s);
  const auto L = c51_loss(m, logits);
  const auto lp = log_softmax(logits);
  double ce = 0.0;
  for (std::size_t i = 0; i < 11; ++i) ce -= m[i] * lp[i];
  EXPECT_NEAR(L.loss, ce, 1e-12);
  const auto fd = oracle::central_differences([&] { return c51_loss(m, logits).loss; }, logits, 1e-6);
  EXPECT_LT(oracle::relative_error(L.d_logits, fd), 1e-7);
}

TEST(C51, EpsilonSchedule) {
  EXPECT_EQ(epsilon_schedule(0, 1.0, 0.01, 0.1, 1000), 1.0);
  EXPECT_NEAR(epsilon_schedule(50, 1.0, 0.01, 0.1, 1000), 0.505, 1e-12);
  EXPECT_EQ(epsilon_schedule(100, 1.0, 0.01, 0.1, 1000), 0.01);
  EXPECT_EQ(epsilon_schedule(999, 1.0, 0.01, 0.1, 1000), 0.01);
  EXPECT_THROW(epsilon_schedule(0, 1.0, 0.0, 0.0, 10), InvalidInput);
}

TEST(ReplayBuffer, RingOverwritesOldest) {
  ReplayBuffer b(3, 1);
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> o{static_cast<double>(i)};
    b.add(o, static_cast<std::size_t>(i), i * 10.0, o, i % 2 == 0);
  }
  EXPECT_EQ(b.size(), 3u);
  // slots 0 and 1 were overwritten by transitions 3 and 4
  EXPECT_EQ(b.obs(0)[0], 3.0);
  EXPECT_EQ(b.obs(1)[0], 4.0);
  EXPECT_EQ(b.obs(2)[0], 2.0);
  EXPECT_EQ(b.reward(1), 40.0);
  EXPECT_TRUE(b.done(1));
  EXPECT_FALSE(b.done(0));
  RngStream s(1, 1);
  for (auto i : b.sample_indices(100, s)) EXPECT_LT(i, 3u);
  const std::vector<double> wrong{1.0, 2.0};
  EXPECT_THROW(b.add(wrong, 0, 0.0, wrong, false), InvalidInput);
}

TEST(C51Agent, NotReadyBeforeLearningStarts) {
  std::vector<net::LayerSpec> specs{{2, 8, net::Activation::relu, false, net::InitScheme::orthogonal(1.0)},
                                    {8, 2 * 51, net::Activation::linear, false, net::InitScheme::orthogonal(1.0)}};
  RngStream init(8, 0), s(1, 1);
  C51Config cfg;
  cfg.learning_starts = 10;
  C51Agent agent(net::Network::create(specs, init), 2, cfg, std::make_unique<mitigations::Adam>());
  ReplayBuffer b(100, 2);
  const std::vector<double> o{1.0, 0.0};
  for (int i = 0; i < 9; ++i) b.add(o, 0, 0.0, o, true);
  EXPECT_FALSE(agent.train_step(b, s).has_value());
  for (int i = 0; i < 30; ++i) b.add(o, 0, 0.0, o, true);
  EXPECT_TRUE(agent.train_step(b, s).has_value());
  EXPECT_TRUE(agent.last_gradients().has_value());
}

TEST(C51Agent, RecoversChainValues) {
  const auto r = chain::train_c51(1);
  EXPECT_LT(r.max_error, 0.05) << r.q[0] << " " << r.q[1] << " " << r.q[2] << " " << r.q[3];
}
