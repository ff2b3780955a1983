#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <utility>
#include <vector>

namespace flowtune {

// What an optimizer wants to run during the next MI. probe marks exploratory
// measurements as opposed to settling on an operating point.
struct OptimizerDecision {
  int next_stream_count = 1;
  bool probe = false;
};

// ---- Finite-difference gradient-descent tuner ----

struct GDConfig {
  int n_min = 1;
  int n_max = 64;
  int probe_delta = 1;
  double initial_step = 1.0;
  double step_decay = 0.5;  // applied when the gradient sign flips
  double step_floor = 1.0;
};

struct GDState {
  GDConfig cfg;
  int center = 1;      // current operating point
  double step = 1.0;   // >= cfg.step_floor
  int phase = 0;       // 0: probe up next, 1: probe down next, 2: move next
  double util_up = 0.0;
  double util_down = 0.0;
  int last_sign = 0;
  int last_cmd = 1;
};

GDState make_gd_state(const GDConfig& cfg, int initial_streams);

// One MI of the probe/probe/move cycle. observed_utility is the utility
// measured at the previously commanded stream count.
OptimizerDecision gd_step(GDState& state, double observed_utility);

// ---- Bayesian optimizer: GP surrogate + expected improvement ----

struct BOConfig {
  int n_min = 1;
  int n_max = 64;
  int window = 20;        // observations kept by the surrogate
  int init_samples = 5;   // seeded random decisions before the GP takes over
  double length_scale = 2.8;
  double noise_var = 1e-2;  // in normalized-utility units
};

struct BOState {
  BOConfig cfg;
  std::deque<std::pair<int, double>> observations;  // (n, utility), oldest first
  long decisions_made = 0;
  std::mt19937_64 rng;
};

BOState make_bo_state(const BOConfig& cfg, uint64_t seed);

// Inserts the observation (evicting beyond the window), then either takes the
// next seeded random sample or the EI argmax over the integer search range.
OptimizerDecision bo_step(BOState& state, std::pair<int, double> observed);

// EI of a Gaussian posterior (mu, sigma) against the incumbent best. Zero
// variance collapses to max(mu - best, 0) clamped at improvement 0.
double expected_improvement(double mu, double sigma, double best);

// GP posterior over the integer candidates; exposed for tests.
struct GpPosterior {
  std::vector<double> mean;
  std::vector<double> var;
};
GpPosterior bo_posterior(const BOState& state);

// ---- No optimizer: one stream forever ----

OptimizerDecision no_opt_step();

}  // namespace flowtune
