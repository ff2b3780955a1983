#include "flowtune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flowtune/link_sim.hpp"

namespace flowtune {

namespace {

int clamp_n(int n, int lo, int hi) { return std::clamp(n, lo, hi); }

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double norm_pdf(double z) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

// Cholesky factorization in place; returns false if the matrix is not
// positive definite.
bool cholesky(std::vector<double>& k, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = k[static_cast<size_t>(i) * n + j];
      for (int p = 0; p < j; ++p)
        sum -= k[static_cast<size_t>(i) * n + p] * k[static_cast<size_t>(j) * n + p];
      if (i == j) {
        if (sum <= 0.0) return false;
        k[static_cast<size_t>(i) * n + j] = std::sqrt(sum);
      } else {
        k[static_cast<size_t>(i) * n + j] = sum / k[static_cast<size_t>(j) * n + j];
      }
    }
  }
  return true;
}

void chol_solve(const std::vector<double>& l, int n, std::vector<double>& x) {
  for (int i = 0; i < n; ++i) {
    double sum = x[static_cast<size_t>(i)];
    for (int j = 0; j < i; ++j) sum -= l[static_cast<size_t>(i) * n + j] * x[static_cast<size_t>(j)];
    x[static_cast<size_t>(i)] = sum / l[static_cast<size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double sum = x[static_cast<size_t>(i)];
    for (int j = i + 1; j < n; ++j) sum -= l[static_cast<size_t>(j) * n + i] * x[static_cast<size_t>(j)];
    x[static_cast<size_t>(i)] = sum / l[static_cast<size_t>(i) * n + i];
  }
}

}  // namespace

GDState make_gd_state(const GDConfig& cfg, int initial_streams) {
  if (cfg.probe_delta < 1) throw std::invalid_argument("gd: probe delta must be >= 1");
  if (cfg.step_floor < 1.0) throw std::invalid_argument("gd: step floor must be >= 1");
  GDState s;
  s.cfg = cfg;
  s.center = clamp_n(initial_streams, cfg.n_min, cfg.n_max);
  s.step = std::max(cfg.initial_step, cfg.step_floor);
  s.phase = 0;
  s.last_cmd = s.center;
  return s;
}

OptimizerDecision gd_step(GDState& s, double observed_utility) {
  if (!std::isfinite(observed_utility))
    throw std::invalid_argument("gd_step: utility must be finite");
  const auto& cfg = s.cfg;
  OptimizerDecision d;
  switch (s.phase) {
    case 0:  // utility at the center just arrived; probe above
      s.last_cmd = clamp_n(s.center + cfg.probe_delta, cfg.n_min, cfg.n_max);
      s.phase = 1;
      d = {s.last_cmd, true};
      break;
    case 1:  // got the up-probe; probe below
      s.util_up = observed_utility;
      s.last_cmd = clamp_n(s.center - cfg.probe_delta, cfg.n_min, cfg.n_max);
      s.phase = 2;
      d = {s.last_cmd, true};
      break;
    default: {  // got the down-probe; move along the estimated gradient
      s.util_down = observed_utility;
      double g = (s.util_up - s.util_down) / (2.0 * cfg.probe_delta);
      if (g != 0.0) {
        int sign = g > 0 ? 1 : -1;
        if (s.last_sign != 0 && sign != s.last_sign)
          s.step = std::max(cfg.step_floor, s.step * cfg.step_decay);
        s.last_sign = sign;
        s.center = clamp_n(s.center + sign * static_cast<int>(std::lround(s.step)),
                           cfg.n_min, cfg.n_max);
      }
      s.last_cmd = s.center;
      s.phase = 0;
      d = {s.last_cmd, false};
      break;
    }
  }
  return d;
}

BOState make_bo_state(const BOConfig& cfg, uint64_t seed) {
  if (cfg.window < 1) throw std::invalid_argument("bo: window must be >= 1");
  if (cfg.length_scale <= 0) throw std::invalid_argument("bo: length scale must be > 0");
  if (cfg.noise_var < 0) throw std::invalid_argument("bo: noise variance must be >= 0");
  BOState s;
  s.cfg = cfg;
  s.rng.seed(splitmix64(seed ^ 0x626f2d726e67ULL));
  return s;
}

double expected_improvement(double mu, double sigma, double best) {
  if (sigma <= 0.0) return std::max(mu - best, 0.0);  // deterministic improvement
  double z = (mu - best) / sigma;
  double ei = (mu - best) * norm_cdf(z) + sigma * norm_pdf(z);
  return std::max(ei, 0.0);
}

GpPosterior bo_posterior(const BOState& s) {
  const auto& cfg = s.cfg;
  const int m = static_cast<int>(s.observations.size());
  const int span = cfg.n_max - cfg.n_min + 1;
  GpPosterior post;
  post.mean.assign(static_cast<size_t>(span), 0.0);
  post.var.assign(static_cast<size_t>(span), 1.0);
  if (m == 0) return post;

  // Normalize utilities so the unit-signal kernel is well scaled.
  double mean_u = 0.0;
  for (const auto& [n, u] : s.observations) mean_u += u;
  mean_u /= m;
  double var_u = 0.0;
  for (const auto& [n, u] : s.observations) var_u += (u - mean_u) * (u - mean_u);
  double std_u = std::sqrt(var_u / m);
  if (std_u < 1e-12) std_u = 1.0;

  auto kernel = [&cfg](double a, double b) {
    double d = (a - b) / cfg.length_scale;
    return std::exp(-0.5 * d * d);
  };

  std::vector<double> k(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double v = kernel(s.observations[static_cast<size_t>(i)].first,
                        s.observations[static_cast<size_t>(j)].first);
      if (i == j) v += cfg.noise_var;
      k[static_cast<size_t>(i) * m + j] = v;
    }

  std::vector<double> l = k;
  if (!cholesky(l, m)) {
    // Jitter once; if the matrix still is not PD the caller falls back.
    l = k;
    for (int i = 0; i < m; ++i) l[static_cast<size_t>(i) * m + i] += 1e-6;
    if (!cholesky(l, m)) {
      post.mean.clear();
      post.var.clear();
      return post;
    }
  }

  std::vector<double> alpha(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i)
    alpha[static_cast<size_t>(i)] =
        (s.observations[static_cast<size_t>(i)].second - mean_u) / std_u;
  chol_solve(l, m, alpha);

  std::vector<double> kx(static_cast<size_t>(m));
  for (int c = 0; c < span; ++c) {
    double x = cfg.n_min + c;
    for (int i = 0; i < m; ++i)
      kx[static_cast<size_t>(i)] = kernel(x, s.observations[static_cast<size_t>(i)].first);
    double mu = 0.0;
    for (int i = 0; i < m; ++i) mu += kx[static_cast<size_t>(i)] * alpha[static_cast<size_t>(i)];

    std::vector<double> v = kx;
    chol_solve(l, m, v);
    double reduction = 0.0;
    for (int i = 0; i < m; ++i) reduction += kx[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
    double var = 1.0 + cfg.noise_var - reduction;
    if (var < 1e-10) var = 0.0;

    post.mean[static_cast<size_t>(c)] = mu * std_u + mean_u;
    post.var[static_cast<size_t>(c)] = var * std_u * std_u;
  }
  return post;
}

OptimizerDecision bo_step(BOState& s, std::pair<int, double> observed) {
  if (!std::isfinite(observed.second))
    throw std::invalid_argument("bo_step: utility must be finite");
  const auto& cfg = s.cfg;
  s.observations.push_back(observed);
  while (static_cast<int>(s.observations.size()) > cfg.window) s.observations.pop_front();
  s.decisions_made++;

  if (s.decisions_made <= cfg.init_samples) {
    int span = cfg.n_max - cfg.n_min + 1;
    int n = cfg.n_min + static_cast<int>(s.rng() % static_cast<uint64_t>(span));
    return {n, true};
  }

  int best_n = cfg.n_min;
  double best_u = -std::numeric_limits<double>::infinity();
  for (const auto& [n, u] : s.observations)
    if (u > best_u) {
      best_u = u;
      best_n = n;
    }

  GpPosterior post = bo_posterior(s);
  if (post.mean.empty()) return {best_n, false};  // surrogate unusable

  int pick = best_n;
  double pick_ei = 0.0;
  for (int c = 0; c < static_cast<int>(post.mean.size()); ++c) {
    double ei = expected_improvement(post.mean[static_cast<size_t>(c)],
                                     std::sqrt(post.var[static_cast<size_t>(c)]), best_u);
    if (ei > pick_ei) {
      pick_ei = ei;
      pick = cfg.n_min + c;
    }
  }
  if (pick_ei <= 0.0) return {best_n, false};
  return {pick, pick != best_n};
}

OptimizerDecision no_opt_step() { return {1, false}; }

}  // namespace flowtune
