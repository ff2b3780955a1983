#include "flowtune/transfer_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowtune {

StateWindow::StateWindow(int h) {
  if (h < 1) throw std::invalid_argument("StateWindow: history length must be >= 1");
  entries_.assign(static_cast<size_t>(h), SignalVector{0.0, 0.0, 0.0, 0.0});
}

void StateWindow::clear() {
  size_t h = entries_.size();
  entries_.assign(h, SignalVector{0.0, 0.0, 0.0, 0.0});
}

void StateWindow::push(const SignalVector& s) {
  entries_.pop_front();
  entries_.push_back(s);
}

std::vector<double> StateWindow::flatten() const {
  std::vector<double> out;
  out.reserve(entries_.size() * 4);
  for (const auto& e : entries_) {
    out.push_back(e.rtt_gradient);
    out.push_back(e.rtt_ratio);
    out.push_back(e.loss_rate);
    out.push_back(e.mean_throughput);
  }
  return out;
}

int action_delta(Action a) { return kActionDeltas[static_cast<int>(a)]; }

const char* action_name(Action a) {
  switch (a) {
    case Action::Up5: return "up5";
    case Action::Up1: return "up1";
    case Action::Hold: return "hold";
    case Action::Down1: return "down1";
    case Action::Down5: return "down5";
  }
  return "?";
}

Action action_from_index(int i) {
  if (i < 0 || i >= kActionCount) throw std::out_of_range("action index");
  return static_cast<Action>(i);
}

void EnvConfig::validate() const {
  if (history_len < 1) throw std::invalid_argument("env: history_len must be >= 1");
  if (n_min < 1) throw std::invalid_argument("env: n_min must be >= 1");
  if (!(n_min <= initial_streams && initial_streams <= n_max))
    throw std::invalid_argument("env: need n_min <= initial_streams <= n_max");
  if (episode_len < 1) throw std::invalid_argument("env: episode_len must be >= 1");
  if (utility.k_base <= 1.0) throw std::invalid_argument("env: K must be > 1");
  if (utility.b_penalty < 0) throw std::invalid_argument("env: B must be >= 0");
  if (reward.epsilon < 0) throw std::invalid_argument("env: epsilon must be >= 0");
  if (!(reward.pos_reward > 0 && reward.neg_reward < 0))
    throw std::invalid_argument("env: need pos_reward > 0 > neg_reward");
}

double EnvConfig::resolved_capacity_scale(double link_capacity) const {
  return capacity_scale > 0 ? capacity_scale : link_capacity;
}

double utility(int n, double throughput_mbps, double loss, const UtilityParams& p) {
  if (n < 1) throw std::invalid_argument("utility: n must be >= 1");
  if (throughput_mbps < 0) throw std::invalid_argument("utility: throughput must be >= 0");
  if (loss < 0 || loss >= 1) throw std::invalid_argument("utility: loss must be in [0,1)");
  return throughput_mbps / std::pow(p.k_base, n) -
         throughput_mbps * loss * p.b_penalty;
}

double reward_for(double u_curr, double u_prev, const RewardParams& p) {
  double delta = u_curr - u_prev;
  if (delta > p.epsilon) return p.pos_reward;
  if (delta < -p.epsilon) return p.neg_reward;
  return 0.0;
}

int apply_action(int n, Action a, const EnvConfig& cfg) {
  return std::clamp(n + action_delta(a), cfg.n_min, cfg.n_max);
}

SignalVector build_signal(const TransferStats& stats, std::optional<double> prev_mean_rtt,
                          std::optional<double> min_mean_rtt, double mi_duration_s,
                          double capacity_scale) {
  if (mi_duration_s <= 0) throw std::invalid_argument("build_signal: bad MI duration");
  if (capacity_scale <= 0) throw std::invalid_argument("build_signal: bad capacity scale");
  SignalVector s;
  s.rtt_gradient =
      prev_mean_rtt ? (stats.mean_rtt_s - *prev_mean_rtt) / mi_duration_s : 0.0;
  double floor = min_mean_rtt ? std::min(*min_mean_rtt, stats.mean_rtt_s) : stats.mean_rtt_s;
  if (floor <= 0) throw std::invalid_argument("build_signal: non-positive RTT");
  s.rtt_ratio = stats.mean_rtt_s / floor;
  s.loss_rate = stats.loss_rate;
  s.mean_throughput = stats.throughput_mbps / capacity_scale;
  return s;
}

SignalTracker::SignalTracker(const EnvConfig& cfg, double mi_duration_s,
                             double capacity_scale)
    : cfg_(cfg),
      mi_duration_s_(mi_duration_s),
      capacity_scale_(capacity_scale),
      window_(cfg.history_len) {}

void SignalTracker::reset() {
  window_.clear();
  prev_mean_rtt_.reset();
  min_mean_rtt_.reset();
  prev_utility_.reset();
}

void SignalTracker::seed_baseline_utility(const TransferStats& stats) {
  prev_utility_ = utility(std::max(1, stats.stream_count), stats.throughput_mbps,
                          stats.loss_rate, cfg_.utility);
}

SignalTracker::Observation SignalTracker::observe(const TransferStats& stats) {
  Observation obs;
  obs.signal =
      build_signal(stats, prev_mean_rtt_, min_mean_rtt_, mi_duration_s_, capacity_scale_);
  window_.push(obs.signal);

  prev_mean_rtt_ = stats.mean_rtt_s;
  min_mean_rtt_ = min_mean_rtt_ ? std::min(*min_mean_rtt_, stats.mean_rtt_s)
                                : stats.mean_rtt_s;

  obs.utility = utility(std::max(1, stats.stream_count), stats.throughput_mbps,
                        stats.loss_rate, cfg_.utility);
  obs.reward = prev_utility_ ? reward_for(obs.utility, *prev_utility_, cfg_.reward) : 0.0;
  prev_utility_ = obs.utility;
  return obs;
}

TransferEnv::TransferEnv(LinkScenario link, EnvConfig cfg, uint64_t master_seed)
    : cfg_(cfg),
      link_(std::move(link)),
      tracker_(cfg, link_.scenario().mi_duration_s,
               cfg.resolved_capacity_scale(link_.scenario().capacity_mbps)),
      master_seed_(master_seed) {
  cfg_.validate();
}

const StateWindow& TransferEnv::reset() { return reset(next_episode_); }

const StateWindow& TransferEnv::reset(uint64_t episode_index) {
  next_episode_ = episode_index + 1;
  link_.reset(splitmix64(master_seed_ ^ (episode_index * 0x9e3779b97f4a7c15ULL + 1)));
  tracker_.reset();
  streams_ = cfg_.initial_streams;
  mi_ = 0;
  episode_open_ = true;

  // Baseline MI at the initial concurrency: fixes the utility the first
  // step's reward is measured against, and nothing else.
  auto stats = link_.step({{0, streams_}});
  tracker_.seed_baseline_utility(stats.at(0));
  return tracker_.window();
}

TransferEnv::StepResult TransferEnv::advance(int n) {
  if (!episode_open_ || done())
    throw std::logic_error("TransferEnv::step called on a finished episode");
  streams_ = n;
  auto stats = link_.step({{0, streams_}});
  auto obs = tracker_.observe(stats.at(0));
  ++mi_;

  StepResult r;
  r.state = tracker_.window().flatten();
  r.reward = obs.reward;
  r.done = done();
  r.stats = stats.at(0);
  r.utility = obs.utility;
  return r;
}

TransferEnv::StepResult TransferEnv::step(Action a) {
  return advance(apply_action(streams_, a, cfg_));
}

TransferEnv::StepResult TransferEnv::step_with_count(int n) {
  return advance(std::clamp(n, cfg_.n_min, cfg_.n_max));
}

}  // namespace flowtune
