#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "flowtune/policy.hpp"

using namespace flowtune;

namespace {

LinkScenario throttled_noiseless() {
  LinkScenario sc;
  sc.capacity_mbps = 1000.0;
  sc.per_stream_cap_mbps = 50.0;
  sc.noise_std = 0.0;
  sc.bg.enabled = false;
  return sc;
}

// Random but well-conditioned batch for gradient checks: ratios kept away
// from the clip boundary and advantages away from zero.
Trajectory make_batch(int samples, int input_dim, const PolicyParams& p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1p-53; };
  Trajectory traj;
  for (int i = 0; i < samples; ++i) {
    Vec state(static_cast<size_t>(input_dim));
    for (auto& x : state) x = unit() * 2.0 - 1.0;
    ForwardOut out = forward(p, state);
    int a = static_cast<int>(rng() % 5);
    traj.states.push_back(state);
    traj.actions.push_back(action_from_index(a));
    traj.rewards.push_back(unit() > 0.5 ? 1.0 : -1.0);
    // offset so the ratio ends up near exp(+-0.05), inside the clip band
    traj.log_probs.push_back(std::log(out.probs[static_cast<size_t>(a)]) +
                             (unit() - 0.5) * 0.1);
    traj.values.push_back(out.value + (unit() > 0.5 ? 0.7 : -0.7));
    traj.rewards.back() += i % 3 - 1;
  }
  return traj;
}

double max_fd_rel_error(PolicyParams p, const Trajectory& traj, const TrainConfig& cfg) {
  Vec returns = discounted_returns(traj, cfg.gamma);
  ParamTensors grads = zeros_like(p);
  ppo_loss(p, traj, returns, {}, cfg, &grads);

  auto prefs = tensor_refs(p.t);
  auto grefs = tensor_refs(grads);
  REQUIRE(prefs.size() == grefs.size());

  const double h = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < prefs.size(); ++i) {
    double saved = *prefs[i];
    *prefs[i] = saved + h;
    double up = ppo_loss(p, traj, returns, {}, cfg, nullptr).total;
    *prefs[i] = saved - h;
    double down = ppo_loss(p, traj, returns, {}, cfg, nullptr).total;
    *prefs[i] = saved;
    double fd = (up - down) / (2.0 * h);
    double denom = std::max({std::abs(fd), std::abs(*grefs[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - *grefs[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("zero parameters give a uniform policy and zero value") {
  PolicyParams p = init_policy(8, {4, 4}, true, 1);
  for (auto& l : p.t.trunk)
    for (auto& w : l.W.a) w = 0.0;
  for (auto& w : p.t.actor_head.W.a) w = 0.0;
  for (auto& w : p.t.critic_head.W.a) w = 0.0;

  ForwardOut out = forward(p, Vec(8, 0.3));
  for (double q : out.probs) CHECK(q == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(out.value == 0.0);
}

TEST_CASE("softmax head is a distribution for random parameters") {
  std::mt19937_64 rng(55);
  for (int i = 0; i < 1000; ++i) {
    PolicyParams p = init_policy(8, {6}, true, rng());
    Vec state(8);
    for (auto& x : state) x = static_cast<double>(rng() >> 11) * 0x1p-53 * 4.0 - 2.0;
    ForwardOut out = forward(p, state);
    double sum = 0.0;
    for (double q : out.probs) {
      CHECK(q >= 0.0);
      sum += q;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("forward is deterministic and rejects non-finite input") {
  PolicyParams p = init_policy(12, {8, 8}, true, 3);
  Vec state(12, 0.25);
  ForwardOut a = forward(p, state);
  ForwardOut b = forward(p, state);
  CHECK(a.probs == b.probs);
  CHECK(a.value == b.value);

  state[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(p, state), std::invalid_argument);
}

TEST_CASE("action sampling") {
  std::mt19937_64 rng(17);

  SUBCASE("degenerate distribution is deterministic") {
    auto [a, logp] = sample_action({1.0, 0.0, 0.0, 0.0, 0.0}, rng);
    CHECK(a == Action::Up5);
    CHECK(logp == 0.0);
  }
  SUBCASE("uniform frequencies converge") {
    std::array<int, 5> counts{};
    for (int i = 0; i < 100000; ++i) {
      auto [a, logp] = sample_action({0.2, 0.2, 0.2, 0.2, 0.2}, rng);
      counts[static_cast<size_t>(static_cast<int>(a))]++;
      CHECK(logp <= 0.0);
    }
    for (int c : counts) CHECK(std::abs(c / 100000.0 - 0.2) < 0.01);
  }
  SUBCASE("log prob is never positive") {
    for (int i = 0; i < 1000; ++i) {
      double a = static_cast<double>(rng() % 1000) / 1000.0;
      std::array<double, 5> probs{a / 2, (1 - a) / 2, a / 2, (1 - a) / 2, 0.0};
      auto [act, logp] = sample_action(probs, rng);
      (void)act;
      CHECK(logp <= 0.0);
    }
  }
  SUBCASE("non-normalized vectors are rejected") {
    CHECK_THROWS_AS(sample_action({0.5, 0.2, 0.1, 0.1, 0.2}, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_action({0.2, 0.2, 0.2, 0.2, -0.2}, rng), std::invalid_argument);
  }
}

TEST_CASE("discounted returns are suffix sums") {
  Trajectory t;
  auto fill = [&t](std::vector<double> rewards) {
    t = Trajectory{};
    for (double r : rewards) {
      t.states.push_back(Vec(4, 0.0));
      t.actions.push_back(Action::Hold);
      t.rewards.push_back(r);
      t.log_probs.push_back(-1.0);
      t.values.push_back(0.0);
    }
  };

  fill({1, 1, 1});
  CHECK(discounted_returns(t, 1.0) == Vec{3, 2, 1});
  fill({1, 0, 0});
  CHECK(discounted_returns(t, 0.5) == Vec{1, 0, 0});
  fill({0, 0, 1});
  CHECK(discounted_returns(t, 0.5) == Vec{0.25, 0.5, 1});
}

TEST_CASE("ratio-one batches reduce the actor term to the mean advantage") {
  PolicyParams p = init_policy(8, {4}, true, 11);
  std::mt19937_64 rng(2);
  Trajectory traj;
  double adv_sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    Vec state(8);
    for (auto& x : state) x = static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5;
    ForwardOut out = forward(p, state);
    int a = static_cast<int>(rng() % 5);
    traj.states.push_back(state);
    traj.actions.push_back(action_from_index(a));
    traj.rewards.push_back(i % 2 ? 1.0 : -1.0);
    traj.log_probs.push_back(std::log(out.probs[static_cast<size_t>(a)]));  // ratio = 1
    traj.values.push_back(out.value);
  }
  TrainConfig cfg;
  cfg.gamma = 1.0;
  Vec returns = discounted_returns(traj, cfg.gamma);
  for (size_t i = 0; i < traj.size(); ++i) adv_sum += returns[i] - traj.values[i];

  LossParts parts = ppo_loss(p, traj, returns, {}, cfg, nullptr);
  CHECK(parts.actor == doctest::Approx(-adv_sum / 6.0).epsilon(1e-9));
}

TEST_CASE("clipping caps the per-sample objective") {
  // Single sample with A = 1 and ratio = 2 under clip 0.2: the objective
  // contributes min(2*1, 1.2*1) = 1.2.
  PolicyParams p = init_policy(4, {3}, true, 21);
  Vec state(4, 0.1);
  ForwardOut out = forward(p, state);
  Trajectory traj;
  traj.states.push_back(state);
  traj.actions.push_back(Action::Hold);
  traj.rewards.push_back(0.0);
  traj.log_probs.push_back(std::log(out.probs[2]) - std::log(2.0));  // ratio 2
  traj.values.push_back(-1.0);  // A = R - V = 0 - (-1) = 1
  TrainConfig cfg;
  cfg.gamma = 1.0;
  cfg.entropy_coeff = 0.0;
  cfg.value_coeff = 0.0;
  Vec returns = discounted_returns(traj, cfg.gamma);
  LossParts parts = ppo_loss(p, traj, returns, {}, cfg, nullptr);
  CHECK(parts.actor == doctest::Approx(-1.2).epsilon(1e-9));

  SUBCASE("the objective never exceeds either branch") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10000; ++i) {
      double ratio = 0.1 + static_cast<double>(rng() % 400) / 100.0;
      double adv = (static_cast<double>(rng() % 200) - 100.0) / 25.0;
      double clipped = std::clamp(ratio, 0.8, 1.2);
      double objective = std::min(ratio * adv, clipped * adv);
      CHECK(objective <= std::max(ratio * adv, clipped * adv) + 1e-12);
      if (adv > 0) CHECK(objective <= ratio * adv + 1e-12);
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  TrainConfig cfg;
  cfg.gamma = 0.99;

  SUBCASE("ppo-clip, shared trunk") {
    PolicyParams p = init_policy(8, {2, 2}, true, 101);
    Trajectory traj = make_batch(10, 8, p, 31);
    CHECK(max_fd_rel_error(p, traj, cfg) < 1e-4);
  }
  SUBCASE("ppo-clip, separate critic trunk") {
    PolicyParams p = init_policy(8, {2, 2}, false, 102);
    Trajectory traj = make_batch(10, 8, p, 32);
    CHECK(max_fd_rel_error(p, traj, cfg) < 1e-4);
  }
  SUBCASE("a2c mode") {
    cfg.mode = LossMode::A2c;
    PolicyParams p = init_policy(8, {2, 2}, true, 103);
    Trajectory traj = make_batch(10, 8, p, 33);
    CHECK(max_fd_rel_error(p, traj, cfg) < 1e-4);
  }
}

TEST_CASE("adaptive updates") {
  PolicyParams p = init_policy(6, {4}, true, 77);
  AdamState opt = make_adam_state(p);

  SUBCASE("zero gradients leave parameters unchanged") {
    PolicyParams before = p;
    update(p, zeros_like(p), opt, 1e-3);
    CHECK(p.t.trunk[0].W.a == before.t.trunk[0].W.a);
    CHECK(p.t.actor_head.W.a == before.t.actor_head.W.a);
  }
  SUBCASE("repeated identical gradients produce different steps") {
    ParamTensors g = zeros_like(p);
    g.actor_head.W.a[0] = 1.0;
    update(p, g, opt, 1e-3);
    double w1 = p.t.actor_head.W.a[0];
    double step1 = w1;  // relative to initial
    update(p, g, opt, 1e-3);
    double step2 = p.t.actor_head.W.a[0] - w1;
    CHECK(step1 != step2);  // moment state advanced
  }
  SUBCASE("shape mismatch is an error") {
    PolicyParams other = init_policy(6, {5}, true, 78);
    CHECK_THROWS_AS(update(p, other.t, opt, 1e-3), std::invalid_argument);
  }
  SUBCASE("fifty updates on one batch reduce the loss") {
    Trajectory traj = make_batch(12, 6, p, 41);
    TrainConfig cfg;
    Vec returns = discounted_returns(traj, cfg.gamma);
    double first = ppo_loss(p, traj, returns, {}, cfg, nullptr).total;
    for (int i = 0; i < 50; ++i) {
      ParamTensors g = zeros_like(p);
      ppo_loss(p, traj, returns, {}, cfg, &g);
      update(p, g, opt, 3e-3);
    }
    double last = ppo_loss(p, traj, returns, {}, cfg, nullptr).total;
    CHECK(last < first);
  }
}

TEST_CASE("training runs deterministically") {
  LinkScenario link = throttled_noiseless();
  link.noise_std = 0.02;
  EnvConfig env_cfg;
  TrainConfig cfg;
  cfg.episodes = 8;
  cfg.hidden = {8, 8};
  cfg.master_seed = 31415;

  SUBCASE("zero episodes return the initial parameters") {
    PolicyParams initial = init_policy(32, cfg.hidden, true, 5);
    TransferEnv env(link, env_cfg, 1);
    TrainConfig zero = cfg;
    zero.episodes = 0;
    TrainResult r = train(env, zero, &initial);
    CHECK(r.params.t.actor_head.W.a == initial.t.actor_head.W.a);
    CHECK(r.log.empty());
  }
  SUBCASE("same master seed, same log and parameters") {
    TransferEnv env1(link, env_cfg, 1), env2(link, env_cfg, 1);
    TrainResult a = train(env1, cfg);
    TrainResult b = train(env2, cfg);
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].episode_return == b.log[i].episode_return);
      CHECK(a.log[i].actor_loss == b.log[i].actor_loss);
      CHECK(a.log[i].critic_loss == b.log[i].critic_loss);
      CHECK(a.log[i].entropy == b.log[i].entropy);
    }
    CHECK(a.params.t.actor_head.W.a == b.params.t.actor_head.W.a);
    CHECK(a.params.t.trunk[0].W.a == b.params.t.trunk[0].W.a);
  }
}

TEST_CASE("policy files round-trip bit-exactly") {
  PolicyParams p = init_policy(32, {16, 16}, true, 2024);
  std::string path = (std::filesystem::temp_directory_path() / "ft_policy_rt.json").string();
  save_policy(p, path);
  PolicyParams q = load_policy(path);

  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    Vec state(32);
    for (auto& x : state) x = static_cast<double>(rng() >> 11) * 0x1p-53 * 2.0 - 1.0;
    ForwardOut a = forward(p, state);
    ForwardOut b = forward(q, state);
    CHECK(a.probs == b.probs);
    CHECK(a.value == b.value);
  }

  SUBCASE("truncated files are rejected whole") {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    std::string trunc_path =
        (std::filesystem::temp_directory_path() / "ft_policy_trunc.json").string();
    std::ofstream out(trunc_path);
    out << text.substr(0, text.size() / 2);
    out.close();
    CHECK_THROWS_AS(load_policy(trunc_path), std::runtime_error);
  }
  SUBCASE("input dimension mismatches are rejected") {
    CHECK_THROWS_AS(load_policy(path, 16), std::runtime_error);  // wrong history length
    CHECK_NOTHROW(load_policy(path, 32));
  }
  std::filesystem::remove(path);
}

TEST_CASE("fine-tuning from a saved policy starts from identical parameters") {
  LinkScenario link = throttled_noiseless();
  EnvConfig env_cfg;
  TransferEnv env(link, env_cfg, 1);
  TrainConfig cfg;
  cfg.episodes = 0;

  PolicyParams p = init_policy(32, {8}, true, 9);
  std::string path = (std::filesystem::temp_directory_path() / "ft_policy_ft.json").string();
  save_policy(p, path);
  PolicyParams loaded = load_policy(path);
  TrainResult r = train(env, cfg, &loaded);
  CHECK(r.params.t.actor_head.W.a == p.t.actor_head.W.a);
  CHECK(r.params.t.critic_head.W.a == p.t.critic_head.W.a);
  CHECK(r.params.t.trunk[0].W.a == p.t.trunk[0].W.a);
  std::filesystem::remove(path);
}
