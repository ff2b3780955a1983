#include "flowtune/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace flowtune {

namespace {

void mul_vec(const Mat& w, const Vec& x, const Vec& b, Vec& out) {
  out.assign(w.rows, 0.0);
  for (int r = 0; r < w.rows; ++r) {
    double acc = b.empty() ? 0.0 : b[r];
    const double* row = &w.a[static_cast<size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

// out[c] += sum_r w[r][c] * d[r]
void mul_vec_t_acc(const Mat& w, const Vec& d, Vec& out) {
  for (int r = 0; r < w.rows; ++r) {
    const double* row = &w.a[static_cast<size_t>(r) * w.cols];
    double dr = d[r];
    for (int c = 0; c < w.cols; ++c) out[c] += row[c] * dr;
  }
}

void outer_acc(Mat& gw, Vec& gb, const Vec& d, const Vec& x) {
  for (int r = 0; r < gw.rows; ++r) {
    double* row = &gw.a[static_cast<size_t>(r) * gw.cols];
    double dr = d[r];
    for (int c = 0; c < gw.cols; ++c) row[c] += dr * x[c];
    gb[r] += dr;
  }
}

void tanh_inplace(Vec& v) {
  for (double& x : v) x = std::tanh(x);
}

std::array<double, kActionCount> softmax(const Vec& logits) {
  std::array<double, kActionCount> p{};
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (int i = 0; i < kActionCount; ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

Layer make_layer(int out, int in, std::mt19937_64& rng) {
  Layer l;
  l.W = Mat(out, in);
  l.b.assign(out, 0.0);
  double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : l.W.a)
    w = ((static_cast<double>(rng() >> 11) * 0x1p-53) * 2.0 - 1.0) * scale;
  return l;
}

Layer zero_layer(const Layer& like) {
  Layer l;
  l.W = Mat(like.W.rows, like.W.cols);
  l.b.assign(like.b.size(), 0.0);
  return l;
}

// Fixed per-channel conditioning of the raw signal window. The four channels
// arrive on very different scales (RTT gradient ~1e-2, ratio ~1, loss ~1e-3,
// normalized throughput ~1); this brings congestion onset into the same range
// the tanh trunk can resolve. Zero padding vectors pass through as zeros.
Vec condition_state(const Vec& state) {
  Vec out(state.size());
  for (size_t i = 0; i + 3 < state.size(); i += 4) {
    out[i] = state[i] * 20.0;                                    // rtt gradient
    out[i + 1] = state[i + 1] > 0.0 ? (state[i + 1] - 1.0) * 10.0 : 0.0;  // rtt ratio
    out[i + 2] = state[i + 2] * 50.0;                            // loss rate
    out[i + 3] = state[i + 3] > 0.0 ? (state[i + 3] - 0.5) * 4.0 : 0.0;   // throughput
  }
  return out;
}

// Activations of one trunk for one input; activations[0] is the input.
void trunk_forward(const std::vector<Layer>& trunk, const Vec& x,
                   std::vector<Vec>& activations) {
  activations.clear();
  activations.push_back(x);
  Vec cur = x;
  Vec next;
  for (const auto& layer : trunk) {
    mul_vec(layer.W, cur, layer.b, next);
    tanh_inplace(next);
    activations.push_back(next);
    cur = next;
  }
}

// Backprop a head delta through a tanh trunk, accumulating gradients.
void trunk_backward(const std::vector<Layer>& trunk, const std::vector<Vec>& activations,
                    Vec delta, std::vector<Layer>& grads) {
  for (int l = static_cast<int>(trunk.size()) - 1; l >= 0; --l) {
    const Vec& act = activations[static_cast<size_t>(l) + 1];
    for (size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - act[i] * act[i];
    outer_acc(grads[static_cast<size_t>(l)].W, grads[static_cast<size_t>(l)].b, delta,
              activations[static_cast<size_t>(l)]);
    if (l > 0) {
      Vec prev(activations[static_cast<size_t>(l)].size(), 0.0);
      mul_vec_t_acc(trunk[static_cast<size_t>(l)].W, delta, prev);
      delta = std::move(prev);
    }
  }
}

void check_same_shape(const Layer& a, const Layer& b, const char* what) {
  if (a.W.rows != b.W.rows || a.W.cols != b.W.cols || a.b.size() != b.b.size())
    throw std::invalid_argument(std::string("update: shape mismatch in ") + what);
}

void adam_layer(Layer& p, const Layer& g, Layer& m, Layer& v, double lr, double b1,
                double b2, double eps, double bc1, double bc2) {
  for (size_t i = 0; i < p.W.a.size(); ++i) {
    m.W.a[i] = b1 * m.W.a[i] + (1 - b1) * g.W.a[i];
    v.W.a[i] = b2 * v.W.a[i] + (1 - b2) * g.W.a[i] * g.W.a[i];
    p.W.a[i] -= lr * (m.W.a[i] / bc1) / (std::sqrt(v.W.a[i] / bc2) + eps);
  }
  for (size_t i = 0; i < p.b.size(); ++i) {
    m.b[i] = b1 * m.b[i] + (1 - b1) * g.b[i];
    v.b[i] = b2 * v.b[i] + (1 - b2) * g.b[i] * g.b[i];
    p.b[i] -= lr * (m.b[i] / bc1) / (std::sqrt(v.b[i] / bc2) + eps);
  }
}

nlohmann::json layer_to_json(const Layer& l) {
  nlohmann::json j;
  j["rows"] = l.W.rows;
  j["cols"] = l.W.cols;
  j["w"] = l.W.a;
  j["b"] = l.b;
  return j;
}

Layer layer_from_json(const nlohmann::json& j) {
  Layer l;
  l.W = Mat(j.at("rows").get<int>(), j.at("cols").get<int>());
  auto w = j.at("w").get<std::vector<double>>();
  if (w.size() != l.W.a.size())
    throw std::runtime_error("policy file: tensor size does not match its dimensions");
  l.W.a = std::move(w);
  l.b = j.at("b").get<std::vector<double>>();
  if (static_cast<int>(l.b.size()) != l.W.rows)
    throw std::runtime_error("policy file: bias size does not match its dimensions");
  return l;
}

}  // namespace

PolicyParams init_policy(int input_dim, const std::vector<int>& hidden, bool shared_trunk,
                         uint64_t seed) {
  if (input_dim < 1) throw std::invalid_argument("init_policy: input_dim must be >= 1");
  if (hidden.empty()) throw std::invalid_argument("init_policy: need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("init_policy: hidden sizes must be >= 1");

  std::mt19937_64 rng(splitmix64(seed ^ 0x706f6c696379ULL));
  PolicyParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.shared_trunk = shared_trunk;
  int in = input_dim;
  for (int h : hidden) {
    p.t.trunk.push_back(make_layer(h, in, rng));
    in = h;
  }
  if (!shared_trunk) {
    in = input_dim;
    for (int h : hidden) {
      p.t.critic_trunk.push_back(make_layer(h, in, rng));
      in = h;
    }
  }
  p.t.actor_head = make_layer(kActionCount, hidden.back(), rng);
  p.t.critic_head = make_layer(1, hidden.back(), rng);
  return p;
}

ParamTensors zeros_like(const PolicyParams& p) {
  ParamTensors z;
  for (const auto& l : p.t.trunk) z.trunk.push_back(zero_layer(l));
  for (const auto& l : p.t.critic_trunk) z.critic_trunk.push_back(zero_layer(l));
  z.actor_head = zero_layer(p.t.actor_head);
  z.critic_head = zero_layer(p.t.critic_head);
  return z;
}

template <typename T, typename Ptr>
static void collect_refs(T& t, std::vector<Ptr>& out) {
  auto add_layer = [&out](auto& l) {
    for (auto& w : l.W.a) out.push_back(&w);
    for (auto& b : l.b) out.push_back(&b);
  };
  for (auto& l : t.trunk) add_layer(l);
  for (auto& l : t.critic_trunk) add_layer(l);
  add_layer(t.actor_head);
  add_layer(t.critic_head);
}

std::vector<double*> tensor_refs(ParamTensors& t) {
  std::vector<double*> out;
  collect_refs(t, out);
  return out;
}

std::vector<const double*> tensor_refs(const ParamTensors& t) {
  std::vector<const double*> out;
  collect_refs(t, out);
  return out;
}

size_t param_count(const ParamTensors& t) {
  std::vector<const double*> refs;
  collect_refs(t, refs);
  return refs.size();
}

ForwardOut forward(const PolicyParams& p, const Vec& state) {
  if (static_cast<int>(state.size()) != p.input_dim)
    throw std::invalid_argument("forward: state length does not match input_dim");
  for (double x : state)
    if (!std::isfinite(x)) throw std::invalid_argument("forward: non-finite state input");

  Vec cond = condition_state(state);
  std::vector<Vec> acts;
  trunk_forward(p.t.trunk, cond, acts);
  Vec logits;
  mul_vec(p.t.actor_head.W, acts.back(), p.t.actor_head.b, logits);

  ForwardOut out;
  out.probs = softmax(logits);

  Vec v;
  if (p.shared_trunk) {
    mul_vec(p.t.critic_head.W, acts.back(), p.t.critic_head.b, v);
  } else {
    std::vector<Vec> cacts;
    trunk_forward(p.t.critic_trunk, cond, cacts);
    mul_vec(p.t.critic_head.W, cacts.back(), p.t.critic_head.b, v);
  }
  out.value = v[0];
  return out;
}

std::pair<Action, double> sample_action(const std::array<double, kActionCount>& probs,
                                        std::mt19937_64& rng) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("sample_action: invalid probability entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("sample_action: probabilities do not sum to 1");

  double u = (static_cast<double>(rng() >> 11)) * 0x1p-53 * sum;
  double cum = 0.0;
  int chosen = kActionCount - 1;
  for (int i = 0; i < kActionCount; ++i) {
    cum += probs[i];
    if (u < cum) {
      chosen = i;
      break;
    }
  }
  return {action_from_index(chosen), std::log(std::max(probs[chosen], 1e-300))};
}

Vec discounted_returns(const Trajectory& traj, double gamma) {
  if (traj.size() == 0)
    throw std::invalid_argument("discounted_returns: empty trajectory");
  Vec out(traj.size(), 0.0);
  double acc = 0.0;
  for (int t = static_cast<int>(traj.size()) - 1; t >= 0; --t) {
    acc = traj.rewards[static_cast<size_t>(t)] + gamma * acc;
    out[static_cast<size_t>(t)] = acc;
  }
  return out;
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "ppo-clip") return LossMode::PpoClip;
  if (s == "a2c") return LossMode::A2c;
  throw std::invalid_argument("unknown loss mode: " + s);
}

void TrainConfig::validate() const {
  if (episodes < 0) throw std::invalid_argument("train: episodes must be >= 0");
  if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("train: gamma in (0,1]");
  if (!(clip_ratio > 0 && clip_ratio < 1))
    throw std::invalid_argument("train: clip ratio in (0,1)");
  if (learning_rate <= 0) throw std::invalid_argument("train: lr must be positive");
  if (epochs < 1 || minibatch < 1)
    throw std::invalid_argument("train: epochs and minibatch must be >= 1");
}

LossParts ppo_loss(const PolicyParams& p, const Trajectory& traj, const Vec& returns,
                   const std::vector<int>& idx, const TrainConfig& cfg,
                   ParamTensors* grads) {
  if (traj.size() == 0) throw std::invalid_argument("ppo_loss: empty batch");
  if (returns.size() != traj.size())
    throw std::invalid_argument("ppo_loss: returns length mismatch");

  std::vector<int> all;
  if (idx.empty()) {
    all.resize(traj.size());
    std::iota(all.begin(), all.end(), 0);
  }
  const std::vector<int>& batch = idx.empty() ? all : idx;
  const double m = static_cast<double>(batch.size());
  const double c = cfg.clip_ratio;

  LossParts parts;
  std::vector<Vec> acts, cacts;
  Vec logits, vout;

  for (int i : batch) {
    const Vec x = condition_state(traj.states[static_cast<size_t>(i)]);
    trunk_forward(p.t.trunk, x, acts);
    mul_vec(p.t.actor_head.W, acts.back(), p.t.actor_head.b, logits);
    auto probs = softmax(logits);

    const std::vector<Layer>& vtrunk = p.shared_trunk ? p.t.trunk : p.t.critic_trunk;
    const std::vector<Vec>* vacts = &acts;
    if (!p.shared_trunk) {
      trunk_forward(vtrunk, x, cacts);
      vacts = &cacts;
    }
    mul_vec(p.t.critic_head.W, vacts->back(), p.t.critic_head.b, vout);
    double value = vout[0];

    int a = static_cast<int>(traj.actions[static_cast<size_t>(i)]);
    double logp = std::log(std::max(probs[a], 1e-300));
    double ret = returns[static_cast<size_t>(i)];
    double adv = ret - traj.values[static_cast<size_t>(i)];

    // d(actor loss)/d logp for this sample, before the 1/m averaging
    double dlogp = 0.0;
    if (cfg.mode == LossMode::PpoClip) {
      double ratio = std::exp(std::clamp(logp - traj.log_probs[static_cast<size_t>(i)],
                                         -20.0, 20.0));
      double clipped = std::clamp(ratio, 1.0 - c, 1.0 + c);
      double objective = std::min(ratio * adv, clipped * adv);
      parts.actor += -objective / m;
      bool saturated = (adv > 0 && ratio > 1.0 + c) || (adv < 0 && ratio < 1.0 - c);
      dlogp = saturated ? 0.0 : -adv * ratio / m;
    } else {
      parts.actor += -logp * adv / m;
      dlogp = -adv / m;
    }

    double verr = ret - value;
    parts.critic += verr * verr / m;

    double entropy = 0.0;
    for (double q : probs)
      if (q > 0) entropy -= q * std::log(q);
    parts.entropy += entropy / m;

    if (grads) {
      // logits delta: actor objective plus entropy bonus
      Vec dz(kActionCount, 0.0);
      for (int k = 0; k < kActionCount; ++k) {
        double indicator = (k == a) ? 1.0 : 0.0;
        dz[k] = dlogp * (indicator - probs[k]);
        double logq = std::log(std::max(probs[k], 1e-300));
        dz[k] += cfg.entropy_coeff * probs[k] * (logq + entropy) / m;
      }
      outer_acc(grads->actor_head.W, grads->actor_head.b, dz, acts.back());
      Vec dh(acts.back().size(), 0.0);
      mul_vec_t_acc(p.t.actor_head.W, dz, dh);

      double dv = -2.0 * cfg.value_coeff * verr / m;
      Vec dvv(1, dv);
      outer_acc(grads->critic_head.W, grads->critic_head.b, dvv, vacts->back());

      if (p.shared_trunk) {
        Vec dhc(acts.back().size(), 0.0);
        mul_vec_t_acc(p.t.critic_head.W, dvv, dhc);
        for (size_t k = 0; k < dh.size(); ++k) dh[k] += dhc[k];
        trunk_backward(p.t.trunk, acts, std::move(dh), grads->trunk);
      } else {
        trunk_backward(p.t.trunk, acts, std::move(dh), grads->trunk);
        Vec dhc(cacts.back().size(), 0.0);
        mul_vec_t_acc(p.t.critic_head.W, dvv, dhc);
        trunk_backward(vtrunk, cacts, std::move(dhc), grads->critic_trunk);
      }
    }
  }

  parts.total = parts.actor + cfg.value_coeff * parts.critic - cfg.entropy_coeff * parts.entropy;
  if (!std::isfinite(parts.total)) {
    std::ostringstream os;
    os << "ppo_loss: non-finite loss (actor=" << parts.actor << " critic=" << parts.critic
       << " entropy=" << parts.entropy << ")";
    throw std::runtime_error(os.str());
  }
  return parts;
}

AdamState make_adam_state(const PolicyParams& p) {
  AdamState s;
  s.m = zeros_like(p);
  s.v = zeros_like(p);
  return s;
}

void update(PolicyParams& p, const ParamTensors& grads, AdamState& opt, double lr) {
  if (grads.trunk.size() != p.t.trunk.size() ||
      grads.critic_trunk.size() != p.t.critic_trunk.size())
    throw std::invalid_argument("update: layer count mismatch");
  for (size_t i = 0; i < p.t.trunk.size(); ++i)
    check_same_shape(p.t.trunk[i], grads.trunk[i], "trunk");
  for (size_t i = 0; i < p.t.critic_trunk.size(); ++i)
    check_same_shape(p.t.critic_trunk[i], grads.critic_trunk[i], "critic trunk");
  check_same_shape(p.t.actor_head, grads.actor_head, "actor head");
  check_same_shape(p.t.critic_head, grads.critic_head, "critic head");

  opt.t++;
  double bc1 = 1.0 - std::pow(opt.beta1, opt.t);
  double bc2 = 1.0 - std::pow(opt.beta2, opt.t);
  for (size_t i = 0; i < p.t.trunk.size(); ++i)
    adam_layer(p.t.trunk[i], grads.trunk[i], opt.m.trunk[i], opt.v.trunk[i], lr, opt.beta1,
               opt.beta2, opt.eps, bc1, bc2);
  for (size_t i = 0; i < p.t.critic_trunk.size(); ++i)
    adam_layer(p.t.critic_trunk[i], grads.critic_trunk[i], opt.m.critic_trunk[i],
               opt.v.critic_trunk[i], lr, opt.beta1, opt.beta2, opt.eps, bc1, bc2);
  adam_layer(p.t.actor_head, grads.actor_head, opt.m.actor_head, opt.v.actor_head, lr,
             opt.beta1, opt.beta2, opt.eps, bc1, bc2);
  adam_layer(p.t.critic_head, grads.critic_head, opt.m.critic_head, opt.v.critic_head, lr,
             opt.beta1, opt.beta2, opt.eps, bc1, bc2);
}

const char* kTrainingLogHeader = "episode,return,actor_loss,critic_loss,entropy,wall_ms";

TrainResult train(TransferEnv& env, const TrainConfig& cfg, const PolicyParams* initial,
                  std::ostream* log_stream) {
  cfg.validate();
  TrainResult result;
  result.params = initial ? *initial
                          : init_policy(env.input_dim(), cfg.hidden, cfg.shared_trunk,
                                        splitmix64(cfg.master_seed ^ 0x696e6974ULL));
  if (result.params.input_dim != env.input_dim())
    throw std::invalid_argument("train: policy input_dim does not match env history");

  if (log_stream) *log_stream << kTrainingLogHeader << "\n";
  if (cfg.episodes == 0) return result;

  AdamState opt = make_adam_state(result.params);
  std::mt19937_64 action_rng(splitmix64(cfg.master_seed ^ 0x616374ULL));
  std::mt19937_64 shuffle_rng(splitmix64(cfg.master_seed ^ 0x73687566ULL));

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    auto t0 = std::chrono::steady_clock::now();

    Trajectory traj;
    env.reset();
    Vec state = env.window().flatten();
    double episode_return = 0.0;
    bool done = false;
    while (!done) {
      ForwardOut out = forward(result.params, state);
      auto [action, logp] = sample_action(out.probs, action_rng);
      auto sr = env.step(action);
      traj.states.push_back(state);
      traj.actions.push_back(action);
      traj.rewards.push_back(sr.reward);
      traj.log_probs.push_back(logp);
      traj.values.push_back(out.value);
      episode_return += sr.reward;
      state = sr.state;
      done = sr.done;
    }

    Vec returns = discounted_returns(traj, cfg.gamma);

    double actor_sum = 0.0, critic_sum = 0.0, entropy_sum = 0.0;
    int updates = 0;
    std::vector<int> order(traj.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (size_t lo = 0; lo < order.size(); lo += static_cast<size_t>(cfg.minibatch)) {
        size_t hi = std::min(order.size(), lo + static_cast<size_t>(cfg.minibatch));
        std::vector<int> batch(order.begin() + static_cast<long>(lo),
                               order.begin() + static_cast<long>(hi));
        ParamTensors grads = zeros_like(result.params);
        LossParts parts = ppo_loss(result.params, traj, returns, batch, cfg, &grads);
        update(result.params, grads, opt, cfg.learning_rate);
        actor_sum += parts.actor;
        critic_sum += parts.critic;
        entropy_sum += parts.entropy;
        ++updates;
      }
    }

    auto t1 = std::chrono::steady_clock::now();
    EpisodeLog log;
    log.episode = ep;
    log.episode_return = episode_return;
    log.actor_loss = actor_sum / updates;
    log.critic_loss = critic_sum / updates;
    log.entropy = entropy_sum / updates;
    log.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.log.push_back(log);
    if (log_stream) {
      *log_stream << log.episode << ',' << log.episode_return << ',' << log.actor_loss
                  << ',' << log.critic_loss << ',' << log.entropy << ',' << log.wall_ms
                  << "\n";
      log_stream->flush();
    }
  }
  return result;
}

namespace {
constexpr const char* kPolicyFormat = "flowtune-policy";
constexpr int kPolicyVersion = 1;
}  // namespace

void save_policy(const PolicyParams& p, const std::string& path) {
  nlohmann::json j;
  j["format"] = kPolicyFormat;
  j["version"] = kPolicyVersion;
  j["input_dim"] = p.input_dim;
  j["action_count"] = kActionCount;
  j["hidden"] = p.hidden;
  j["shared_trunk"] = p.shared_trunk;
  nlohmann::json trunk = nlohmann::json::array();
  for (const auto& l : p.t.trunk) trunk.push_back(layer_to_json(l));
  j["trunk"] = trunk;
  nlohmann::json ctrunk = nlohmann::json::array();
  for (const auto& l : p.t.critic_trunk) ctrunk.push_back(layer_to_json(l));
  j["critic_trunk"] = ctrunk;
  j["actor_head"] = layer_to_json(p.t.actor_head);
  j["critic_head"] = layer_to_json(p.t.critic_head);

  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_policy: cannot open " + path);
  f << j.dump();
  f << "\n";
  if (!f) throw std::runtime_error("save_policy: write failed for " + path);
}

PolicyParams load_policy(const std::string& path, int expected_input_dim) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_policy: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_policy: " + path + " is not a valid policy file: " +
                             e.what());
  }
  if (j.value("format", "") != kPolicyFormat)
    throw std::runtime_error("load_policy: unrecognized format in " + path);
  if (j.value("version", -1) != kPolicyVersion)
    throw std::runtime_error("load_policy: unsupported policy version in " + path);
  if (j.value("action_count", -1) != kActionCount)
    throw std::runtime_error("load_policy: action count mismatch in " + path);

  PolicyParams p;
  p.input_dim = j.at("input_dim").get<int>();
  p.hidden = j.at("hidden").get<std::vector<int>>();
  p.shared_trunk = j.at("shared_trunk").get<bool>();
  for (const auto& l : j.at("trunk")) p.t.trunk.push_back(layer_from_json(l));
  for (const auto& l : j.at("critic_trunk")) p.t.critic_trunk.push_back(layer_from_json(l));
  p.t.actor_head = layer_from_json(j.at("actor_head"));
  p.t.critic_head = layer_from_json(j.at("critic_head"));

  // Cross-check tensor shapes against the declared architecture.
  if (p.t.trunk.size() != p.hidden.size())
    throw std::runtime_error("load_policy: trunk depth mismatch in " + path);
  if (!p.shared_trunk && p.t.critic_trunk.size() != p.hidden.size())
    throw std::runtime_error("load_policy: critic trunk depth mismatch in " + path);
  int in = p.input_dim;
  for (size_t i = 0; i < p.t.trunk.size(); ++i) {
    if (p.t.trunk[i].W.cols != in || p.t.trunk[i].W.rows != p.hidden[i])
      throw std::runtime_error("load_policy: trunk dimension mismatch in " + path);
    in = p.hidden[i];
  }
  if (p.t.actor_head.W.cols != p.hidden.back() || p.t.actor_head.W.rows != kActionCount ||
      p.t.critic_head.W.cols != p.hidden.back() || p.t.critic_head.W.rows != 1)
    throw std::runtime_error("load_policy: head dimension mismatch in " + path);

  if (expected_input_dim >= 0 && p.input_dim != expected_input_dim)
    throw std::runtime_error("load_policy: policy input dimension " +
                             std::to_string(p.input_dim) + " does not match expected " +
                             std::to_string(expected_input_dim));
  return p;
}

}  // namespace flowtune
