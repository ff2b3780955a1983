#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowtune/baselines.hpp"
#include "flowtune/link_sim.hpp"
#include "flowtune/policy.hpp"
#include "flowtune/transfer_env.hpp"

namespace flowtune {

enum class OptimizerKind { Rl, Gd, Bo, None };
OptimizerKind optimizer_kind_from_string(const std::string& s);
const char* optimizer_kind_name(OptimizerKind k);

struct TransferSpec {
  int id = 1;
  OptimizerKind optimizer = OptimizerKind::Gd;
  std::string policy_file;  // required for rl
  int start_mi = 0;
  int stop_mi = -1;  // -1: run until the scenario ends
  bool rl_sample = true;  // sample the stochastic policy vs argmax
  GDConfig gd;
  BOConfig bo;
};

struct Scenario {
  LinkScenario link;
  EnvConfig env;
  std::vector<TransferSpec> transfers;
  int duration_mis = 200;
  std::string out_dir = "out";
  TrainConfig train;

  void validate() const;
};

// Sectioned key/value scenario files: [link], [env], [run], [train] and one
// [transfer.N] per transfer. '#' and ';' start comments. Unknown sections or
// keys are errors.
Scenario parse_scenario_file(const std::string& path);
Scenario parse_scenario_text(const std::string& text);

}  // namespace flowtune
