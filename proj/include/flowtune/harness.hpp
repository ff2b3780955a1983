#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowtune/config.hpp"

namespace flowtune {

extern const char* kTraceHeader;  // mi,transfer_id,streams,...

struct TraceRow {
  int mi = 0;
  int transfer_id = 0;
  int streams = 0;
  double throughput_mbps = 0.0;
  double loss_rate = 0.0;
  double rtt_s = 0.0;
  double utility = 0.0;
  double reward = 0.0;
  std::string action;
};

struct TransferSummary {
  int id = 0;
  OptimizerKind optimizer = OptimizerKind::Gd;
  double mean_throughput_mbps = 0.0;
  double aggregate_loss_rate = 0.0;  // volume-weighted over the transfer
  std::optional<int> convergence_mi;
  int active_mis = 0;
};

struct RunSummary {
  std::vector<TransferSummary> transfers;
  double mean_utilization = 0.0;          // mean of sum(T_i)/capacity
  std::optional<double> jain_steady;      // over the steady-state window
  int steady_window_mis = 50;
  int optimal_streams = 0;                // brute-force solo optimum
  double optimal_throughput_mbps = 0.0;   // noiseless throughput at optimum
  uint64_t seed = 0;
};

struct RunResult {
  std::vector<TraceRow> trace;
  RunSummary summary;
};

// Jain fairness index (sum x)^2 / (N sum x^2). Rates must be non-negative and
// not all zero.
double jain_index(const std::vector<double>& rates);

// First MI at which throughput enters (1-band)*optimum and stays there for
// `hold` consecutive MIs. The series is indexed by MI offset from its start.
std::optional<int> convergence_mi(const std::vector<double>& throughput,
                                  double optimum_mbps, double band, int hold);

// Runs every transfer jointly against one link, one MI at a time. Each
// optimizer sees only its own transfer's stats. seed_override replaces the
// scenario's link seed (per-transfer streams derive from it as well).
RunResult run_scenario(const Scenario& s, std::optional<uint64_t> seed_override = {});

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);
std::vector<TraceRow> read_trace_csv(const std::string& path);
void write_summary_json(const RunSummary& summary, const std::string& path);
std::string summary_to_json(const RunSummary& summary);

// Recomputes the summary's per-transfer and link-level metrics from trace
// rows alone (same arithmetic as run_scenario, different input path).
RunSummary summarize_trace(const std::vector<TraceRow>& trace, const Scenario& s,
                           uint64_t seed);

// Noiseless steady-state evaluation at stream count n with the background
// frozen at its mean; shared by the sweep and the convergence oracle.
struct SweepPoint {
  int streams = 0;
  double throughput_mbps = 0.0;
  double loss_rate = 0.0;
  double rtt_s = 0.0;
  long retransmissions = 0;
  double utility = 0.0;
};
SweepPoint sweep_point(const LinkScenario& link, const UtilityParams& util, int n);
std::vector<SweepPoint> concurrency_sweep(const LinkScenario& link,
                                          const UtilityParams& util, int n_lo, int n_hi);

struct CompareRow {
  OptimizerKind optimizer;
  uint64_t seed = 0;
  double mean_throughput_mbps = 0.0;
  double aggregate_loss_rate = 0.0;
  std::optional<int> convergence_mi;
  double mean_utilization = 0.0;
};

// Runs each optimizer kind as a single transfer over the same seed list, so
// all of them face identical link noise and background realizations.
std::vector<CompareRow> compare_optimizers(const Scenario& base,
                                           const std::vector<OptimizerKind>& kinds,
                                           const std::string& policy_file,
                                           const std::vector<uint64_t>& seeds);

}  // namespace flowtune
