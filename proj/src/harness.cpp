#include "flowtune/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "flowtune/policy.hpp"

namespace flowtune {

const char* kTraceHeader =
    "mi,transfer_id,streams,throughput_mbps,loss_rate,rtt_s,utility,reward,action";

double jain_index(const std::vector<double>& rates) {
  if (rates.empty()) throw std::invalid_argument("jain_index: empty rate list");
  double sum = 0.0, sumsq = 0.0;
  for (double x : rates) {
    if (x < 0) throw std::invalid_argument("jain_index: negative rate");
    sum += x;
    sumsq += x * x;
  }
  if (sumsq == 0.0) throw std::domain_error("jain_index: all rates are zero");
  return sum * sum / (static_cast<double>(rates.size()) * sumsq);
}

std::optional<int> convergence_mi(const std::vector<double>& throughput,
                                  double optimum_mbps, double band, int hold) {
  if (!(band > 0 && band < 1)) throw std::invalid_argument("convergence_mi: band in (0,1)");
  if (hold < 1) throw std::invalid_argument("convergence_mi: hold must be >= 1");
  double floor = (1.0 - band) * optimum_mbps;
  int run = 0;
  for (size_t i = 0; i < throughput.size(); ++i) {
    run = throughput[i] >= floor ? run + 1 : 0;
    if (run >= hold) return static_cast<int>(i) - hold + 1;
  }
  return std::nullopt;
}

namespace {

constexpr double kConvergenceBand = 0.05;
constexpr int kConvergenceHold = 5;
constexpr int kSteadyWindow = 50;

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// One transfer's live controller inside a scenario run.
struct TransferDriver {
  TransferSpec spec;
  int stop_mi = 0;
  SignalTracker tracker;
  int streams = 0;
  bool started = false;
  std::string pending_action = "hold";

  GDState gd;
  BOState bo;
  std::shared_ptr<PolicyParams> policy;
  std::mt19937_64 rl_rng;
  EnvConfig env;

  TransferDriver(const TransferSpec& ts, const Scenario& sc, uint64_t run_seed,
                 std::shared_ptr<PolicyParams> pol)
      : spec(ts),
        stop_mi(ts.stop_mi < 0 ? sc.duration_mis : ts.stop_mi),
        tracker(sc.env, sc.link.mi_duration_s,
                sc.env.resolved_capacity_scale(sc.link.capacity_mbps)),
        gd(make_gd_state(ts.gd, sc.env.initial_streams)),
        bo(make_bo_state(ts.bo, splitmix64(run_seed ^ (0x626fULL + ts.id)))),
        policy(std::move(pol)),
        rl_rng(splitmix64(run_seed ^ (0x726cULL + ts.id * 0x10001ULL))),
        env(sc.env) {}

  bool active(int mi) const { return mi >= spec.start_mi && mi < stop_mi; }

  void start() {
    streams = env.initial_streams;
    tracker.reset();
    started = true;
    pending_action = "start";
  }

  // Consumes this MI's stats and decides next MI's stream count.
  SignalTracker::Observation observe_and_decide(const TransferStats& stats) {
    auto obs = tracker.observe(stats);
    switch (spec.optimizer) {
      case OptimizerKind::None: {
        OptimizerDecision d = no_opt_step();
        streams = d.next_stream_count;
        pending_action = "set:1";
        break;
      }
      case OptimizerKind::Gd: {
        OptimizerDecision d = gd_step(gd, obs.utility);
        streams = d.next_stream_count;
        pending_action = "set:" + std::to_string(streams);
        break;
      }
      case OptimizerKind::Bo: {
        OptimizerDecision d = bo_step(bo, {stats.stream_count, obs.utility});
        streams = d.next_stream_count;
        pending_action = "set:" + std::to_string(streams);
        break;
      }
      case OptimizerKind::Rl: {
        ForwardOut out = forward(*policy, tracker.window().flatten());
        Action a;
        if (spec.rl_sample) {
          a = sample_action(out.probs, rl_rng).first;
        } else {
          int best = 0;
          for (int i = 1; i < kActionCount; ++i)
            if (out.probs[static_cast<size_t>(i)] > out.probs[static_cast<size_t>(best)])
              best = i;
          a = action_from_index(best);
        }
        streams = apply_action(streams, a, env);
        pending_action = action_name(a);
        break;
      }
    }
    return obs;
  }
};

}  // namespace

SweepPoint sweep_point(const LinkScenario& link, const UtilityParams& util, int n) {
  SweepPoint p;
  p.streams = n;
  LinkCondition cond = eval_link(link, n + link.bg.mean_level());
  p.throughput_mbps = n * cond.per_stream_rate_mbps * (1.0 - cond.loss_rate);
  p.loss_rate = cond.loss_rate;
  p.rtt_s = cond.rtt_s;
  p.retransmissions = retransmission_count(link, p.throughput_mbps, cond.loss_rate);
  p.utility = utility(std::max(1, n), p.throughput_mbps, cond.loss_rate, util);
  return p;
}

std::vector<SweepPoint> concurrency_sweep(const LinkScenario& link,
                                          const UtilityParams& util, int n_lo, int n_hi) {
  if (n_lo < 1 || n_hi < n_lo) throw std::invalid_argument("sweep: bad stream range");
  std::vector<SweepPoint> out;
  out.reserve(static_cast<size_t>(n_hi - n_lo + 1));
  for (int n = n_lo; n <= n_hi; ++n) out.push_back(sweep_point(link, util, n));
  return out;
}

RunResult run_scenario(const Scenario& s, std::optional<uint64_t> seed_override) {
  s.validate();
  uint64_t run_seed = seed_override.value_or(s.link.seed);

  // Load policies up front so a bad file fails before any output exists.
  std::map<std::string, std::shared_ptr<PolicyParams>> policies;
  for (const auto& t : s.transfers) {
    if (t.optimizer != OptimizerKind::Rl) continue;
    if (!policies.count(t.policy_file))
      policies[t.policy_file] = std::make_shared<PolicyParams>(
          load_policy(t.policy_file, s.env.history_len * 4));
  }

  LinkScenario link = s.link;
  link.seed = run_seed;
  LinkSession session(link);

  std::map<int, TransferDriver> drivers;
  for (const auto& t : s.transfers) {
    TransferSpec spec = t;
    spec.gd.n_min = spec.bo.n_min = s.env.n_min;
    spec.gd.n_max = spec.bo.n_max = s.env.n_max;
    auto pol = t.optimizer == OptimizerKind::Rl ? policies.at(t.policy_file) : nullptr;
    drivers.emplace(t.id, TransferDriver(spec, s, run_seed, pol));
  }

  RunResult result;

  for (int mi = 0; mi < s.duration_mis; ++mi) {
    std::map<int, int> counts;
    for (auto& [id, d] : drivers) {
      if (!d.active(mi)) continue;
      if (!d.started) d.start();
      counts[id] = d.streams;
    }
    auto stats = session.step(counts);

    for (auto& [id, d] : drivers) {
      if (!counts.count(id)) continue;
      const TransferStats& st = stats.at(id);
      std::string action = d.pending_action;
      auto obs = d.observe_and_decide(st);

      TraceRow row;
      row.mi = mi;
      row.transfer_id = id;
      row.streams = st.stream_count;
      row.throughput_mbps = st.throughput_mbps;
      row.loss_rate = st.loss_rate;
      row.rtt_s = st.mean_rtt_s;
      row.utility = obs.utility;
      row.reward = obs.reward;
      row.action = action;
      result.trace.push_back(row);
    }
  }

  // Metrics come from the trace alone so an external recomputation from the
  // CSV reproduces them exactly.
  result.summary = summarize_trace(result.trace, s, run_seed);
  return result;
}

RunSummary summarize_trace(const std::vector<TraceRow>& trace, const Scenario& s,
                           uint64_t seed) {
  RunSummary sum;
  sum.seed = seed;
  sum.steady_window_mis = kSteadyWindow;
  sum.optimal_streams = optimal_concurrency(s.link, s.env.utility, s.env.n_max);
  sum.optimal_throughput_mbps =
      sweep_point(s.link, s.env.utility, sum.optimal_streams).throughput_mbps;

  // Per-transfer aggregates in spec order.
  std::map<int, std::vector<const TraceRow*>> by_transfer;
  for (const auto& r : trace) by_transfer[r.transfer_id].push_back(&r);

  std::map<int, double> util_by_mi;
  for (const auto& r : trace) util_by_mi[r.mi] += r.throughput_mbps;
  double util_sum = 0.0;
  for (const auto& [mi, t] : util_by_mi) {
    (void)mi;
    util_sum += t / s.link.capacity_mbps;
  }
  sum.mean_utilization = s.duration_mis > 0 ? util_sum / s.duration_mis : 0.0;

  for (const auto& t : s.transfers) {
    TransferSummary ts;
    ts.id = t.id;
    ts.optimizer = t.optimizer;
    auto it = by_transfer.find(t.id);
    if (it != by_transfer.end()) {
      double thr_sum = 0.0, weighted_loss = 0.0;
      std::vector<double> series;
      for (const TraceRow* r : it->second) {
        thr_sum += r->throughput_mbps;
        weighted_loss += r->throughput_mbps * r->loss_rate;
        series.push_back(r->throughput_mbps);
      }
      ts.active_mis = static_cast<int>(it->second.size());
      ts.mean_throughput_mbps = thr_sum / ts.active_mis;
      ts.aggregate_loss_rate = thr_sum > 0 ? weighted_loss / thr_sum : 0.0;
      ts.convergence_mi = convergence_mi(series, sum.optimal_throughput_mbps,
                                         kConvergenceBand, kConvergenceHold);
    }
    sum.transfers.push_back(ts);
  }

  // Steady-state fairness: final kSteadyWindow MIs during which every
  // transfer is active.
  if (!s.transfers.empty()) {
    int window_end = s.duration_mis;
    int window_start = window_end - kSteadyWindow;
    int latest_start = 0, earliest_stop = s.duration_mis;
    for (const auto& t : s.transfers) {
      latest_start = std::max(latest_start, t.start_mi);
      earliest_stop = std::min(earliest_stop, t.stop_mi < 0 ? s.duration_mis : t.stop_mi);
    }
    window_end = std::min(window_end, earliest_stop);
    window_start = std::max(latest_start, window_end - kSteadyWindow);
    if (window_end - window_start > 0) {
      std::map<int, double> mean_rate;
      std::map<int, int> mis;
      for (const auto& r : trace) {
        if (r.mi >= window_start && r.mi < window_end) {
          mean_rate[r.transfer_id] += r.throughput_mbps;
          mis[r.transfer_id]++;
        }
      }
      std::vector<double> rates;
      for (auto& [id, total] : mean_rate) rates.push_back(total / mis[id]);
      if (!rates.empty()) {
        bool all_zero = std::all_of(rates.begin(), rates.end(),
                                    [](double r) { return r == 0.0; });
        if (!all_zero) sum.jain_steady = jain_index(rates);
      }
    }
  }
  return sum;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write trace: " + path);
  f << kTraceHeader << "\n";
  for (const auto& r : trace) {
    f << r.mi << ',' << r.transfer_id << ',' << r.streams << ','
      << fmt_double(r.throughput_mbps) << ',' << fmt_double(r.loss_rate) << ','
      << fmt_double(r.rtt_s) << ',' << fmt_double(r.utility) << ',' << fmt_double(r.reward)
      << ',' << r.action << "\n";
  }
}

std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read trace: " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("trace file is empty: " + path);
  if (line != kTraceHeader) throw std::runtime_error("unexpected trace header in " + path);
  std::vector<TraceRow> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    TraceRow r;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("short trace row");
      return field;
    };
    r.mi = std::stoi(next());
    r.transfer_id = std::stoi(next());
    r.streams = std::stoi(next());
    r.throughput_mbps = std::stod(next());
    r.loss_rate = std::stod(next());
    r.rtt_s = std::stod(next());
    r.utility = std::stod(next());
    r.reward = std::stod(next());
    r.action = next();
    out.push_back(r);
  }
  return out;
}

std::string summary_to_json(const RunSummary& summary) {
  nlohmann::json j;
  j["seed"] = summary.seed;
  j["mean_utilization"] = summary.mean_utilization;
  j["steady_window_mis"] = summary.steady_window_mis;
  j["optimal_streams"] = summary.optimal_streams;
  j["optimal_throughput_mbps"] = summary.optimal_throughput_mbps;
  if (summary.jain_steady)
    j["jain_steady"] = *summary.jain_steady;
  else
    j["jain_steady"] = nullptr;
  j["transfers"] = nlohmann::json::array();
  for (const auto& t : summary.transfers) {
    nlohmann::json tj;
    tj["id"] = t.id;
    tj["optimizer"] = optimizer_kind_name(t.optimizer);
    tj["mean_throughput_mbps"] = t.mean_throughput_mbps;
    tj["aggregate_loss_rate"] = t.aggregate_loss_rate;
    tj["active_mis"] = t.active_mis;
    if (t.convergence_mi)
      tj["convergence_mi"] = *t.convergence_mi;
    else
      tj["convergence_mi"] = nullptr;
    j["transfers"].push_back(tj);
  }
  return j.dump(2);
}

void write_summary_json(const RunSummary& summary, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write summary: " + path);
  f << summary_to_json(summary) << "\n";
}

std::vector<CompareRow> compare_optimizers(const Scenario& base,
                                           const std::vector<OptimizerKind>& kinds,
                                           const std::string& policy_file,
                                           const std::vector<uint64_t>& seeds) {
  std::vector<CompareRow> rows;
  for (OptimizerKind kind : kinds) {
    for (uint64_t seed : seeds) {
      Scenario sc = base;
      sc.transfers.clear();
      TransferSpec t;
      t.id = 1;
      t.optimizer = kind;
      t.gd.n_min = sc.env.n_min;
      t.gd.n_max = sc.env.n_max;
      t.bo.n_min = sc.env.n_min;
      t.bo.n_max = sc.env.n_max;
      if (kind == OptimizerKind::Rl) t.policy_file = policy_file;
      sc.transfers.push_back(t);

      RunResult r = run_scenario(sc, seed);
      CompareRow row;
      row.optimizer = kind;
      row.seed = seed;
      row.mean_throughput_mbps = r.summary.transfers.at(0).mean_throughput_mbps;
      row.aggregate_loss_rate = r.summary.transfers.at(0).aggregate_loss_rate;
      row.convergence_mi = r.summary.transfers.at(0).convergence_mi;
      row.mean_utilization = r.summary.mean_utilization;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace flowtune
