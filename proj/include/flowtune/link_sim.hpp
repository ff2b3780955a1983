#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <vector>

namespace flowtune {

struct UtilityParams;  // transfer_env.hpp

// Mixes a seed into an independent stream; also good enough as a stateless hash.
uint64_t splitmix64(uint64_t x);

// Standard normal via Box-Muller; always consumes exactly two engine draws,
// so consumption stays aligned across configurations.
double normal_sample(std::mt19937_64& rng);

// Parameters of the single-stream TCP throughput bound,
// T = (mss*8/rtt) * c / sqrt(loss).
struct MathisParams {
  double mss_bytes = 1460.0;
  double rtt_s = 0.1;
  double c_const = 1.0;
};

// Single-stream bound in Mbps. Valid for loss in (0,1); the model is only
// meaningful below ~1e-2 loss, higher values produce a one-time warning.
double mathis_throughput(const MathisParams& p, double loss);

// Multi-stream aggregate: sum of per-stream bounds with shared mss/rtt/c.
// An empty loss list is zero throughput.
double aggregate_throughput(const MathisParams& p, const std::vector<double>& losses);

// Piecewise-constant background stream count: a Markov chain over a small set
// of levels, redrawn uniformly with probability 1/mean_dwell_mis each MI.
struct BackgroundTraffic {
  bool enabled = false;
  std::vector<int> levels = {0, 4, 8, 16};
  double mean_dwell_mis = 30.0;

  // Stationary mean stream count, rounded; used when the process is frozen.
  int mean_level() const;
};

constexpr double kUncapped = std::numeric_limits<double>::infinity();

struct LinkScenario {
  double capacity_mbps = 1000.0;
  double per_stream_cap_mbps = kUncapped;
  double base_rtt_s = 0.05;
  double base_loss = 1e-5;   // in [0,1)
  double loss_slope = 0.05;  // congestion -> loss coupling
  double rtt_slope = 1.0;    // congestion -> rtt inflation
  BackgroundTraffic bg;
  double noise_std = 0.02;  // relative measurement noise on throughput
  uint64_t seed = 1;
  double mi_duration_s = 1.0;
  double mss_bytes = 1460.0;
  double c_const = 1.0;

  void validate() const;  // throws std::invalid_argument
};

struct LinkState {
  long mi_index = 0;
  std::map<int, int> active_transfers;  // transfer id -> stream count
  int bg_streams = 0;
  double offered_load_mbps = 0.0;
  double loss_rate = 0.0;
  double current_rtt_s = 0.0;
};

struct TransferStats {
  double throughput_mbps = 0.0;
  double loss_rate = 0.0;
  int stream_count = 0;
  double mean_rtt_s = 0.0;
  long retransmissions = 0;
};

// Closed-form link condition at a fixed total stream count (no noise, no
// background dynamics): max-min fair share with linear loss/RTT inflation
// in the overload ratio.
struct LinkCondition {
  double per_stream_rate_mbps = 0.0;
  double offered_mbps = 0.0;
  double overload = 0.0;  // max(0, offered/capacity - 1)
  double loss_rate = 0.0;
  double rtt_s = 0.0;
};
LinkCondition eval_link(const LinkScenario& sc, int total_streams);

// Lost segments implied by a throughput measured over one MI.
long retransmission_count(const LinkScenario& sc, double throughput_mbps, double loss_rate);

// One shared bottleneck link stepped in monitoring intervals. Owns its RNG
// streams; identical scenario + seed gives a bit-identical trace.
class LinkSession {
 public:
  explicit LinkSession(LinkScenario sc);

  void reset(uint64_t seed);

  // Advances one MI with the given per-transfer stream counts and returns
  // per-transfer stats. Counts must be in [0, n_max_hint]; inactive transfers
  // are simply absent from the map.
  std::map<int, TransferStats> step(const std::map<int, int>& stream_counts);

  const LinkState& state() const { return state_; }
  const LinkScenario& scenario() const { return scenario_; }

 private:
  LinkScenario scenario_;
  LinkState state_;
  std::mt19937_64 noise_rng_;
  std::mt19937_64 bg_rng_;

  void init_background();
  void advance_background();
};

// Brute-force argmax of steady-state utility over n in [1, n_max], evaluated
// noiselessly with the background process frozen at its mean. Ties break
// toward the smaller n.
int optimal_concurrency(const LinkScenario& sc, const UtilityParams& util, int n_max);

}  // namespace flowtune
