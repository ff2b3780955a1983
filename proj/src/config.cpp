#include "flowtune/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowtune {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "rl") return OptimizerKind::Rl;
  if (s == "gd") return OptimizerKind::Gd;
  if (s == "bo") return OptimizerKind::Bo;
  if (s == "none") return OptimizerKind::None;
  throw std::invalid_argument("unknown optimizer kind: " + s);
}

const char* optimizer_kind_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Rl: return "rl";
    case OptimizerKind::Gd: return "gd";
    case OptimizerKind::Bo: return "bo";
    case OptimizerKind::None: return "none";
  }
  return "?";
}

void Scenario::validate() const {
  link.validate();
  env.validate();
  if (duration_mis < 1) throw std::invalid_argument("run: duration must be >= 1 MI");
  std::vector<int> ids;
  for (const auto& t : transfers) {
    int stop = t.stop_mi < 0 ? duration_mis : t.stop_mi;
    if (!(t.start_mi >= 0 && t.start_mi < stop && stop <= duration_mis))
      throw std::invalid_argument("transfer " + std::to_string(t.id) +
                                  ": need 0 <= start < stop <= duration");
    if (t.optimizer == OptimizerKind::Rl && t.policy_file.empty())
      throw std::invalid_argument("transfer " + std::to_string(t.id) +
                                  ": rl optimizer needs a policy file");
    ids.push_back(t.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("transfer ids must be unique");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct RawConfig {
  // section -> key -> value, with sections in file order
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::vector<std::string> order;
};

RawConfig parse_raw(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": empty section name");
      if (!raw.sections.count(section)) raw.order.push_back(section);
      raw.sections[section];
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    if (section.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": key outside any section");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    raw.sections[section][key] = value;
  }
  return raw;
}

// Typed view over one section that tracks which keys were consumed.
class Section {
 public:
  Section(const std::string& name, const std::map<std::string, std::string>& kv)
      : name_(name), kv_(kv) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt) {
    used_.push_back(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  double num(const std::string& key, double dflt) {
    used_.push_back(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second == "unlimited") return kUncapped;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config [" + name_ + "] " + key + ": not a number: " +
                                  it->second);
    }
  }

  int integer(const std::string& key, int dflt) {
    double v = num(key, dflt);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw std::invalid_argument("config [" + name_ + "] " + key + ": expected an integer");
    return i;
  }

  uint64_t uinteger(const std::string& key, uint64_t dflt) {
    used_.push_back(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw std::invalid_argument("config [" + name_ + "] " + key + ": not an integer");
    }
  }

  bool boolean(const std::string& key, bool dflt) {
    std::string v = str(key, dflt ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config [" + name_ + "] " + key + ": expected a boolean");
  }

  std::vector<int> int_list(const std::string& key, const std::vector<int>& dflt) {
    used_.push_back(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::vector<int> out;
    std::istringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw std::invalid_argument("config [" + name_ + "] " + key + ": bad list entry: " +
                                    item);
      }
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : kv_) {
      (void)value;
      if (std::find(used_.begin(), used_.end(), key) == used_.end())
        throw std::invalid_argument("config [" + name_ + "]: unknown key '" + key + "'");
    }
  }

 private:
  std::string name_;
  const std::map<std::string, std::string>& kv_;
  std::vector<std::string> used_;
};

void load_link(Section& s, LinkScenario& link) {
  link.capacity_mbps = s.num("capacity_mbps", link.capacity_mbps);
  link.per_stream_cap_mbps = s.num("per_stream_cap_mbps", link.per_stream_cap_mbps);
  link.base_rtt_s = s.num("base_rtt_s", link.base_rtt_s);
  link.base_loss = s.num("base_loss", link.base_loss);
  link.loss_slope = s.num("loss_slope", link.loss_slope);
  link.rtt_slope = s.num("rtt_slope", link.rtt_slope);
  link.noise_std = s.num("noise_std", link.noise_std);
  link.seed = s.uinteger("seed", link.seed);
  link.mi_duration_s = s.num("mi_duration_s", link.mi_duration_s);
  link.mss_bytes = s.num("mss_bytes", link.mss_bytes);
  link.c_const = s.num("c_const", link.c_const);
  link.bg.enabled = s.boolean("bg_enabled", link.bg.enabled);
  link.bg.levels = s.int_list("bg_levels", link.bg.levels);
  link.bg.mean_dwell_mis = s.num("bg_dwell_mis", link.bg.mean_dwell_mis);
  s.reject_unknown();
}

void load_env(Section& s, EnvConfig& env) {
  env.history_len = s.integer("history_len", env.history_len);
  env.n_min = s.integer("n_min", env.n_min);
  env.n_max = s.integer("n_max", env.n_max);
  env.episode_len = s.integer("episode_len", env.episode_len);
  env.initial_streams = s.integer("initial_streams", env.initial_streams);
  env.utility.k_base = s.num("k_base", env.utility.k_base);
  env.utility.b_penalty = s.num("b_penalty", env.utility.b_penalty);
  env.capacity_scale = s.num("capacity_scale", env.capacity_scale);
  // Default dead zone: 0.5% of the capacity scale, resolved once the link
  // is known; an explicit epsilon always wins.
  env.reward.epsilon = s.num("epsilon", env.reward.epsilon);
  env.reward.pos_reward = s.num("pos_reward", env.reward.pos_reward);
  env.reward.neg_reward = s.num("neg_reward", env.reward.neg_reward);
  s.reject_unknown();
}

void load_train(Section& s, TrainConfig& train) {
  train.episodes = s.integer("episodes", train.episodes);
  train.gamma = s.num("gamma", train.gamma);
  train.clip_ratio = s.num("clip_ratio", train.clip_ratio);
  train.learning_rate = s.num("learning_rate", train.learning_rate);
  train.epochs = s.integer("epochs", train.epochs);
  train.minibatch = s.integer("minibatch", train.minibatch);
  train.entropy_coeff = s.num("entropy_coeff", train.entropy_coeff);
  train.value_coeff = s.num("value_coeff", train.value_coeff);
  train.master_seed = s.uinteger("seed", train.master_seed);
  train.mode = loss_mode_from_string(s.str("loss_mode", "ppo-clip"));
  train.hidden = s.int_list("hidden", train.hidden);
  train.shared_trunk = s.boolean("shared_trunk", train.shared_trunk);
  s.reject_unknown();
}

void load_transfer(Section& s, const std::string& name, const EnvConfig& env,
                   TransferSpec& t) {
  t.optimizer = optimizer_kind_from_string(s.str("optimizer", "gd"));
  t.policy_file = s.str("policy", "");
  t.start_mi = s.integer("start_mi", 0);
  t.stop_mi = s.integer("stop_mi", -1);
  t.rl_sample = s.boolean("rl_sample", true);
  t.gd.n_min = env.n_min;
  t.gd.n_max = env.n_max;
  t.gd.probe_delta = s.integer("gd_probe_delta", t.gd.probe_delta);
  t.gd.initial_step = s.num("gd_initial_step", t.gd.initial_step);
  t.gd.step_decay = s.num("gd_step_decay", t.gd.step_decay);
  t.gd.step_floor = s.num("gd_step_floor", t.gd.step_floor);
  t.bo.n_min = env.n_min;
  t.bo.n_max = env.n_max;
  t.bo.window = s.integer("bo_window", t.bo.window);
  t.bo.init_samples = s.integer("bo_init_samples", t.bo.init_samples);
  t.bo.length_scale = s.num("bo_length_scale", t.bo.length_scale);
  t.bo.noise_var = s.num("bo_noise_var", t.bo.noise_var);
  s.reject_unknown();
  (void)name;
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
  RawConfig raw = parse_raw(text);
  Scenario sc;
  sc.env.reward.epsilon = -1.0;  // sentinel: resolve from capacity scale below

  for (const auto& name : raw.order) {
    Section s(name, raw.sections.at(name));
    if (name == "link") {
      load_link(s, sc.link);
    } else if (name == "env") {
      load_env(s, sc.env);
    } else if (name == "train") {
      load_train(s, sc.train);
    } else if (name == "run") {
      sc.duration_mis = s.integer("duration_mis", sc.duration_mis);
      sc.out_dir = s.str("out_dir", sc.out_dir);
      s.reject_unknown();
    } else if (name.rfind("transfer.", 0) == 0) {
      TransferSpec t;
      try {
        t.id = std::stoi(name.substr(9));
      } catch (const std::exception&) {
        throw std::invalid_argument("config: bad transfer section name [" + name + "]");
      }
      load_transfer(s, name, sc.env, t);
      sc.transfers.push_back(t);
    } else {
      throw std::invalid_argument("config: unknown section [" + name + "]");
    }
  }

  if (sc.env.reward.epsilon < 0)
    sc.env.reward.epsilon =
        0.005 * sc.env.resolved_capacity_scale(sc.link.capacity_mbps);

  // Transfer sections may precede [env]; refresh the bounds they inherit.
  for (auto& t : sc.transfers) {
    t.gd.n_min = sc.env.n_min;
    t.gd.n_max = sc.env.n_max;
    t.bo.n_min = sc.env.n_min;
    t.bo.n_max = sc.env.n_max;
  }

  sc.validate();
  return sc;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scenario file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scenario_text(ss.str());
}

}  // namespace flowtune
