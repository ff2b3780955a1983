#include "flowtune/link_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "flowtune/transfer_env.hpp"

namespace flowtune {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

// Uniform in (0,1]; never returns 0 so log() below is safe.
double uniform_unit(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1p-53;
}

constexpr uint64_t kNoiseStreamTag = 0x6e6f697365ULL;  // "noise"
constexpr uint64_t kBgStreamTag = 0x62672d6368ULL;     // "bg-ch"

}  // namespace

double normal_sample(std::mt19937_64& rng) {
  constexpr double two_pi = 6.283185307179586476925287;
  double u1 = uniform_unit(rng);
  double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

double mathis_throughput(const MathisParams& p, double loss) {
  if (p.mss_bytes <= 0 || p.rtt_s <= 0 || p.c_const <= 0)
    throw std::invalid_argument("mathis_throughput: mss, rtt and C must be positive");
  if (loss <= 0.0)
    throw std::domain_error("mathis_throughput: model undefined at zero loss");
  if (loss >= 1.0)
    throw std::domain_error("mathis_throughput: loss rate must be below 1");
  if (loss >= 0.01) {
    static bool warned = false;
    if (!warned) {
      std::cerr << "flowtune: warning: Mathis bound queried at loss >= 1e-2, "
                   "outside its validity region\n";
      warned = true;
    }
  }
  double bits_per_s = p.mss_bytes * 8.0 / p.rtt_s * p.c_const / std::sqrt(loss);
  return bits_per_s / 1e6;
}

double aggregate_throughput(const MathisParams& p, const std::vector<double>& losses) {
  double total = 0.0;
  for (double loss : losses) total += mathis_throughput(p, loss);
  return total;
}

int BackgroundTraffic::mean_level() const {
  if (!enabled || levels.empty()) return 0;
  double sum = std::accumulate(levels.begin(), levels.end(), 0.0);
  return static_cast<int>(std::lround(sum / static_cast<double>(levels.size())));
}

void LinkScenario::validate() const {
  if (capacity_mbps <= 0) throw std::invalid_argument("link: capacity must be positive");
  if (per_stream_cap_mbps <= 0)
    throw std::invalid_argument("link: per-stream cap must be positive or unlimited");
  if (base_loss < 0 || base_loss >= 1)
    throw std::invalid_argument("link: base loss must be in [0,1)");
  if (base_rtt_s <= 0) throw std::invalid_argument("link: base rtt must be positive");
  if (loss_slope < 0 || rtt_slope < 0)
    throw std::invalid_argument("link: congestion slopes must be non-negative");
  if (noise_std < 0) throw std::invalid_argument("link: noise std must be non-negative");
  if (mi_duration_s <= 0) throw std::invalid_argument("link: MI duration must be positive");
  if (mss_bytes <= 0 || c_const <= 0)
    throw std::invalid_argument("link: mss and C must be positive");
  if (bg.enabled) {
    if (bg.levels.empty()) throw std::invalid_argument("link: background needs levels");
    for (int l : bg.levels)
      if (l < 0) throw std::invalid_argument("link: background levels must be >= 0");
    if (bg.mean_dwell_mis < 1.0)
      throw std::invalid_argument("link: background dwell must be >= 1 MI");
  }
}

LinkCondition eval_link(const LinkScenario& sc, int total_streams) {
  LinkCondition c;
  if (total_streams <= 0) {
    c.loss_rate = sc.base_loss;
    c.rtt_s = sc.base_rtt_s;
    return c;
  }
  double s = static_cast<double>(total_streams);
  double fair = sc.capacity_mbps / s;
  c.per_stream_rate_mbps = std::min(sc.per_stream_cap_mbps, fair);
  double demand = std::isinf(sc.per_stream_cap_mbps) ? fair : sc.per_stream_cap_mbps;
  c.offered_mbps = s * demand;
  c.overload = std::max(0.0, c.offered_mbps / sc.capacity_mbps - 1.0);
  c.loss_rate = std::min(0.999, sc.base_loss + sc.loss_slope * c.overload);
  c.rtt_s = sc.base_rtt_s * (1.0 + sc.rtt_slope * c.overload);
  return c;
}

long retransmission_count(const LinkScenario& sc, double throughput_mbps,
                          double loss_rate) {
  double volume_bits = throughput_mbps * 1e6 * sc.mi_duration_s;
  double segments_lost = volume_bits * loss_rate / (sc.mss_bytes * 8.0);
  return std::lround(segments_lost);
}

LinkSession::LinkSession(LinkScenario sc) : scenario_(std::move(sc)) {
  scenario_.validate();
  reset(scenario_.seed);
}

void LinkSession::reset(uint64_t seed) {
  state_ = LinkState{};
  state_.loss_rate = scenario_.base_loss;
  state_.current_rtt_s = scenario_.base_rtt_s;
  noise_rng_.seed(splitmix64(seed ^ kNoiseStreamTag));
  bg_rng_.seed(splitmix64(seed ^ kBgStreamTag));
  init_background();
}

void LinkSession::init_background() {
  const auto& bg = scenario_.bg;
  if (!bg.enabled || bg.levels.empty()) {
    state_.bg_streams = 0;
    return;
  }
  size_t idx = bg_rng_() % bg.levels.size();
  state_.bg_streams = bg.levels[idx];
}

void LinkSession::advance_background() {
  const auto& bg = scenario_.bg;
  if (!bg.enabled || bg.levels.empty()) return;
  double u = uniform_unit(bg_rng_);
  if (u <= 1.0 / bg.mean_dwell_mis) {
    size_t idx = bg_rng_() % bg.levels.size();
    state_.bg_streams = bg.levels[idx];
  }
}

std::map<int, TransferStats> LinkSession::step(const std::map<int, int>& stream_counts) {
  int transfer_streams = 0;
  for (const auto& [id, n] : stream_counts) {
    if (n < 0) throw std::invalid_argument("step: negative stream count");
    transfer_streams += n;
  }
  int total = transfer_streams + state_.bg_streams;
  LinkCondition cond = eval_link(scenario_, total);

  state_.active_transfers = stream_counts;
  state_.offered_load_mbps = cond.offered_mbps;
  state_.loss_rate = cond.loss_rate;
  state_.current_rtt_s = cond.rtt_s;

  std::map<int, TransferStats> out;
  for (const auto& [id, n] : stream_counts) {
    TransferStats st;
    st.stream_count = n;
    st.loss_rate = cond.loss_rate;
    st.mean_rtt_s = cond.rtt_s;
    if (n > 0) {
      double t = n * cond.per_stream_rate_mbps * (1.0 - cond.loss_rate);
      double eta = normal_sample(noise_rng_) * scenario_.noise_std;
      eta = std::clamp(eta, -6.0 * scenario_.noise_std, 6.0 * scenario_.noise_std);
      st.throughput_mbps = std::max(0.0, t * (1.0 + eta));
      st.retransmissions = retransmission_count(scenario_, st.throughput_mbps, cond.loss_rate);
    }
    out.emplace(id, st);
  }

  state_.mi_index++;
  advance_background();
  return out;
}

int optimal_concurrency(const LinkScenario& sc, const UtilityParams& util, int n_max) {
  if (n_max < 1) throw std::invalid_argument("optimal_concurrency: n_max must be >= 1");
  int bg = sc.bg.mean_level();
  int best_n = 1;
  double best_u = -std::numeric_limits<double>::infinity();
  for (int n = 1; n <= n_max; ++n) {
    LinkCondition cond = eval_link(sc, n + bg);
    double t = n * cond.per_stream_rate_mbps * (1.0 - cond.loss_rate);
    double u = utility(n, t, cond.loss_rate, util);
    if (u > best_u) {  // ties keep the smaller n
      best_u = u;
      best_n = n;
    }
  }
  return best_n;
}

}  // namespace flowtune
