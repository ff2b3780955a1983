#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "flowtune/link_sim.hpp"

namespace flowtune {

// Per-MI observation fed to the agent. Throughput is normalized by a
// capacity-scale constant so the state generalizes across links.
struct SignalVector {
  double rtt_gradient = 0.0;    // d(mean RTT)/dt, s/s
  double rtt_ratio = 1.0;       // mean RTT / min mean RTT seen this episode
  double loss_rate = 0.0;
  double mean_throughput = 0.0;  // throughput / capacity_scale
};

// Bounded history of the last h signal vectors, newest last. Always holds
// exactly h entries; zero vectors pad the front until h MIs have elapsed.
class StateWindow {
 public:
  explicit StateWindow(int h = 8);

  void clear();
  void push(const SignalVector& s);
  int size() const { return static_cast<int>(entries_.size()); }
  const SignalVector& at(int i) const { return entries_[i]; }

  // Row-major [h x 4] flattening, oldest first.
  std::vector<double> flatten() const;

 private:
  std::deque<SignalVector> entries_;
};

enum class Action { Up5, Up1, Hold, Down1, Down5 };
inline constexpr int kActionCount = 5;
inline constexpr std::array<int, kActionCount> kActionDeltas = {5, 1, 0, -1, -5};

int action_delta(Action a);
const char* action_name(Action a);
Action action_from_index(int i);

// Utility constants K and B: throughput discounted by K^n minus a
// loss-weighted punishment term.
struct UtilityParams {
  double k_base = 1.02;   // > 1
  double b_penalty = 2.0;  // >= 0
};

// Reward rule constants: +x above the dead zone, y below, 0 inside.
struct RewardParams {
  double epsilon = 5.0;
  double pos_reward = 1.0;
  double neg_reward = -1.0;
};

struct EnvConfig {
  int history_len = 8;
  int n_min = 1;
  int n_max = 64;
  int episode_len = 20;  // MIs per episode
  int initial_streams = 2;
  UtilityParams utility;
  RewardParams reward;
  // Normalization constant for throughput signals; <= 0 means "use the
  // link capacity".
  double capacity_scale = 0.0;

  void validate() const;
  double resolved_capacity_scale(double link_capacity) const;
};

// U(n, T, L) = T / K^n - T*L*B
double utility(int n, double throughput_mbps, double loss, const UtilityParams& p);

// Three-valued reward on the utility delta.
double reward_for(double u_curr, double u_prev, const RewardParams& p);

// clamp(n + delta(a), n_min, n_max)
int apply_action(int n, Action a, const EnvConfig& cfg);

// Builds one signal vector from raw stats. prev_mean_rtt is empty on the
// first MI of a connection, which pins the gradient to zero.
SignalVector build_signal(const TransferStats& stats,
                          std::optional<double> prev_mean_rtt,
                          std::optional<double> min_mean_rtt,
                          double mi_duration_s, double capacity_scale);

// Per-transfer signal/utility/reward bookkeeping shared by the environment
// and the multi-transfer harness.
class SignalTracker {
 public:
  SignalTracker(const EnvConfig& cfg, double mi_duration_s, double capacity_scale);

  void reset();

  // Sets the utility baseline from a pre-episode measurement without touching
  // the RTT trackers or the window.
  void seed_baseline_utility(const TransferStats& stats);

  struct Observation {
    SignalVector signal;
    double utility = 0.0;
    double reward = 0.0;
  };
  Observation observe(const TransferStats& stats);

  const StateWindow& window() const { return window_; }

 private:
  EnvConfig cfg_;
  double mi_duration_s_;
  double capacity_scale_;
  StateWindow window_;
  std::optional<double> prev_mean_rtt_;
  std::optional<double> min_mean_rtt_;
  std::optional<double> prev_utility_;
};

// The MDP environment: one transfer on a simulated link, stepped per MI.
// Single-threaded; independent instances may run concurrently.
class TransferEnv {
 public:
  TransferEnv(LinkScenario link, EnvConfig cfg, uint64_t master_seed);

  // Starts the next episode (or an explicit one); the link is reseeded from
  // the master seed and the episode index. Returns the zero-padded window.
  const StateWindow& reset();
  const StateWindow& reset(uint64_t episode_index);

  struct StepResult {
    std::vector<double> state;  // flattened window after the step
    double reward = 0.0;
    bool done = false;
    TransferStats stats;
    double utility = 0.0;
  };
  StepResult step(Action a);

  // Pins the stream count directly; used by fixed-concurrency baselines.
  StepResult step_with_count(int n);

  const StateWindow& window() const { return tracker_.window(); }
  int stream_count() const { return streams_; }
  bool done() const { return mi_ >= cfg_.episode_len; }
  const EnvConfig& config() const { return cfg_; }
  const LinkScenario& link_scenario() const { return link_.scenario(); }
  int input_dim() const { return cfg_.history_len * 4; }

 private:
  EnvConfig cfg_;
  LinkSession link_;
  SignalTracker tracker_;
  uint64_t master_seed_;
  uint64_t next_episode_ = 0;
  int streams_ = 0;
  int mi_ = 0;
  bool episode_open_ = false;

  StepResult advance(int n);
};

}  // namespace flowtune
