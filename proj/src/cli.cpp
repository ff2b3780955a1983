#include "flowtune/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowtune/config.hpp"
#include "flowtune/harness.hpp"
#include "flowtune/plots.hpp"
#include "flowtune/policy.hpp"

namespace flowtune {

namespace {

struct CommonOpts {
  std::string scenario_path;
  std::optional<uint64_t> seed;
  std::optional<int> duration;
  std::optional<std::string> out_dir;
  std::string format = "csv";
};

Scenario load_scenario(const CommonOpts& o) {
  Scenario sc = parse_scenario_file(o.scenario_path);
  if (o.seed) sc.link.seed = *o.seed;
  if (o.duration) sc.duration_mis = *o.duration;
  if (o.out_dir) sc.out_dir = *o.out_dir;
  sc.validate();
  return sc;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("scenario", o.scenario_path, "scenario config file")->required();
  cmd->add_option("--seed", o.seed, "override the scenario seed");
  cmd->add_option("--duration", o.duration, "override the run duration in MIs");
  cmd->add_option("--out-dir", o.out_dir, "override the output directory");
  cmd->add_option("--format", o.format, "table format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
}

TransferEnv make_env(const Scenario& sc, uint64_t master_seed) {
  return TransferEnv(sc.link, sc.env, master_seed);
}

int do_train(const CommonOpts& o, const std::string& in_policy,
             const std::string& out_policy, std::optional<int> episodes) {
  Scenario sc = load_scenario(o);
  TrainConfig cfg = sc.train;
  if (o.seed) cfg.master_seed = *o.seed;
  if (episodes) cfg.episodes = *episodes;

  PolicyParams initial;
  bool have_initial = !in_policy.empty();
  if (have_initial) initial = load_policy(in_policy, sc.env.history_len * 4);

  TransferEnv env = make_env(sc, splitmix64(cfg.master_seed ^ 0x656e76ULL));

  std::filesystem::create_directories(sc.out_dir);
  std::string log_path = sc.out_dir + "/training_log.csv";
  std::ofstream log(log_path);
  if (!log) {
    std::cerr << "flowtune: cannot write " << log_path << "\n";
    return 1;
  }

  TrainResult result = train(env, cfg, have_initial ? &initial : nullptr, &log);
  save_policy(result.params, out_policy);

  double tail = 0.0;
  int tail_n = std::min<size_t>(50, result.log.size());
  for (int i = 0; i < tail_n; ++i)
    tail += result.log[result.log.size() - 1 - i].episode_return;
  std::cout << "trained " << cfg.episodes << " episodes"
            << (have_initial ? " (fine-tuned)" : "") << "; policy -> " << out_policy
            << "\n";
  if (tail_n > 0)
    std::cout << "mean return over final " << tail_n << " episodes: " << tail / tail_n
              << "\n";
  std::cout << "training log -> " << log_path << "\n";
  return 0;
}

int do_run(const CommonOpts& o, bool plots) {
  Scenario sc = load_scenario(o);
  RunResult r = run_scenario(sc);

  std::filesystem::create_directories(sc.out_dir);
  std::string trace_path = sc.out_dir + "/trace.csv";
  std::string summary_path = sc.out_dir + "/summary.json";
  write_trace_csv(r.trace, trace_path);
  write_summary_json(r.summary, summary_path);
  if (plots) emit_plots(r.trace, sc.out_dir);

  if (o.format == "json") {
    std::cout << summary_to_json(r.summary) << "\n";
  } else {
    std::cout << "transfer,optimizer,mean_throughput_mbps,aggregate_loss_rate,"
                 "convergence_mi\n";
    for (const auto& t : r.summary.transfers) {
      std::cout << t.id << ',' << optimizer_kind_name(t.optimizer) << ','
                << t.mean_throughput_mbps << ',' << t.aggregate_loss_rate << ',';
      if (t.convergence_mi)
        std::cout << *t.convergence_mi;
      else
        std::cout << "none";
      std::cout << "\n";
    }
    std::cout << "mean_utilization," << r.summary.mean_utilization << "\n";
    if (r.summary.jain_steady)
      std::cout << "jain_steady," << *r.summary.jain_steady << "\n";
  }
  std::cerr << "trace -> " << trace_path << "\nsummary -> " << summary_path << "\n";
  return 0;
}

int do_sweep(const CommonOpts& o, const std::string& range) {
  Scenario sc = load_scenario(o);
  int lo = 1, hi = sc.env.n_max;
  if (!range.empty()) {
    auto dots = range.find("..");
    if (dots == std::string::npos)
      throw CLI::ValidationError("--n-range", "expected a..b");
    lo = std::stoi(range.substr(0, dots));
    hi = std::stoi(range.substr(dots + 2));
  }
  auto points = concurrency_sweep(sc.link, sc.env.utility, lo, hi);

  std::filesystem::create_directories(sc.out_dir);
  std::string path = sc.out_dir + "/sweep.csv";
  std::ofstream f(path);
  f << "streams,throughput_mbps,loss_rate,rtt_s,retransmissions,utility\n";
  const SweepPoint* best_thr = &points.front();
  const SweepPoint* best_util = &points.front();
  for (const auto& p : points) {
    f << p.streams << ',' << p.throughput_mbps << ',' << p.loss_rate << ',' << p.rtt_s
      << ',' << p.retransmissions << ',' << p.utility << "\n";
    if (p.throughput_mbps > best_thr->throughput_mbps) best_thr = &p;
    if (p.utility > best_util->utility) best_util = &p;
  }
  std::cout << "peak throughput at n=" << best_thr->streams << " ("
            << best_thr->throughput_mbps << " Mbps)\n";
  std::cout << "peak utility at n=" << best_util->streams << " (U=" << best_util->utility
            << ")\n";
  std::cerr << "sweep -> " << path << "\n";
  return 0;
}

int do_compare(const CommonOpts& o, const std::string& policy, int n_seeds) {
  Scenario sc = load_scenario(o);
  std::vector<OptimizerKind> kinds = {OptimizerKind::Gd, OptimizerKind::Bo};
  if (!policy.empty()) kinds.insert(kinds.begin(), OptimizerKind::Rl);
  kinds.push_back(OptimizerKind::None);

  std::vector<uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(splitmix64(sc.link.seed + i));

  auto rows = compare_optimizers(sc, kinds, policy, seeds);
  if (o.format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json rj;
      rj["optimizer"] = optimizer_kind_name(r.optimizer);
      rj["seed"] = r.seed;
      rj["mean_throughput_mbps"] = r.mean_throughput_mbps;
      rj["aggregate_loss_rate"] = r.aggregate_loss_rate;
      rj["mean_utilization"] = r.mean_utilization;
      if (r.convergence_mi)
        rj["convergence_mi"] = *r.convergence_mi;
      else
        rj["convergence_mi"] = nullptr;
      j.push_back(rj);
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "optimizer,seed,mean_throughput_mbps,aggregate_loss_rate,"
                 "convergence_mi,mean_utilization\n";
    for (const auto& r : rows) {
      std::cout << optimizer_kind_name(r.optimizer) << ',' << r.seed << ','
                << r.mean_throughput_mbps << ',' << r.aggregate_loss_rate << ',';
      if (r.convergence_mi)
        std::cout << *r.convergence_mi;
      else
        std::cout << "none";
      std::cout << ',' << r.mean_utilization << "\n";
    }
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"flowtune: parallel TCP stream tuning on a simulated bottleneck link"};
  app.require_subcommand(1);

  CommonOpts train_o, retrain_o, run_o, sweep_o, cmp_o;
  std::string train_out, retrain_in, retrain_out, sweep_range, cmp_policy;
  std::optional<int> train_eps, retrain_eps;
  bool run_plots = false;
  int cmp_seeds = 10;

  auto* cmd_train = app.add_subcommand("train", "train an RL policy on a scenario");
  add_common(cmd_train, train_o);
  cmd_train->add_option("--out", train_out, "output policy file")->required();
  cmd_train->add_option("--episodes", train_eps, "override the episode budget");

  auto* cmd_retrain =
      app.add_subcommand("retrain", "fine-tune an existing policy on a scenario");
  add_common(cmd_retrain, retrain_o);
  cmd_retrain->add_option("--in", retrain_in, "input policy file")->required();
  cmd_retrain->add_option("--out", retrain_out, "output policy file")->required();
  cmd_retrain->add_option("--episodes", retrain_eps, "override the episode budget");

  auto* cmd_run = app.add_subcommand("run", "run a scenario and write trace + summary");
  add_common(cmd_run, run_o);
  cmd_run->add_flag("--plots", run_plots, "emit SVG charts next to the trace");

  auto* cmd_sweep =
      app.add_subcommand("sweep", "noiseless brute-force sweep over stream counts");
  add_common(cmd_sweep, sweep_o);
  cmd_sweep->add_option("--n-range", sweep_range, "stream range a..b");

  auto* cmd_cmp =
      app.add_subcommand("compare", "run all optimizers on matched seeds");
  add_common(cmd_cmp, cmp_o);
  cmd_cmp->add_option("--policy", cmp_policy, "RL policy file (adds the rl row)");
  cmd_cmp->add_option("--seeds", cmp_seeds, "number of matched seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cmd_train->parsed()) return do_train(train_o, "", train_out, train_eps);
    if (cmd_retrain->parsed())
      return do_train(retrain_o, retrain_in, retrain_out, retrain_eps);
    if (cmd_run->parsed()) return do_run(run_o, run_plots);
    if (cmd_sweep->parsed()) return do_sweep(sweep_o, sweep_range);
    if (cmd_cmp->parsed()) return do_compare(cmp_o, cmp_policy, cmp_seeds);
  } catch (const std::exception& e) {
    std::cerr << "flowtune: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace flowtune
