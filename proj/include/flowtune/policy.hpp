#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "flowtune/transfer_env.hpp"

namespace flowtune {

using Vec = std::vector<double>;

// Dense row-major matrix, just big enough for a small MLP.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

struct Layer {
  Mat W;  // out x in
  Vec b;  // out
};

// All trainable tensors; doubles as the gradient container.
struct ParamTensors {
  std::vector<Layer> trunk;         // actor trunk (shared with critic by default)
  std::vector<Layer> critic_trunk;  // used only when the trunk is not shared
  Layer actor_head;                 // 5 x hidden
  Layer critic_head;                // 1 x hidden
};

struct PolicyParams {
  int input_dim = 32;
  std::vector<int> hidden = {64, 64};
  bool shared_trunk = true;
  ParamTensors t;
};

// Fan-in scaled uniform init, zero biases, fully seeded.
PolicyParams init_policy(int input_dim, const std::vector<int>& hidden,
                         bool shared_trunk, uint64_t seed);

ParamTensors zeros_like(const PolicyParams& p);

// Flat views used by the optimizer and the finite-difference tests.
std::vector<double*> tensor_refs(ParamTensors& t);
std::vector<const double*> tensor_refs(const ParamTensors& t);
size_t param_count(const ParamTensors& t);

struct ForwardOut {
  std::array<double, kActionCount> probs{};
  double value = 0.0;
};

// Softmax policy head + scalar value head. Throws on non-finite input.
ForwardOut forward(const PolicyParams& p, const Vec& state);

// Categorical sample; returns the action and log prob of the chosen entry.
// Throws if the vector is not a probability distribution.
std::pair<Action, double> sample_action(const std::array<double, kActionCount>& probs,
                                        std::mt19937_64& rng);

struct Trajectory {
  std::vector<Vec> states;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<double> log_probs;  // at collection time
  std::vector<double> values;     // critic estimates at collection time
  bool terminal = true;

  size_t size() const { return states.size(); }
};

// R_t = r_t + gamma * R_{t+1}, zero after the terminal step.
Vec discounted_returns(const Trajectory& traj, double gamma);

enum class LossMode { PpoClip, A2c };
LossMode loss_mode_from_string(const std::string& s);

struct TrainConfig {
  int episodes = 800;
  double gamma = 0.99;
  double clip_ratio = 0.2;
  double learning_rate = 3e-4;
  int epochs = 4;
  int minibatch = 64;
  double entropy_coeff = 0.01;
  double value_coeff = 0.5;
  uint64_t master_seed = 1;
  LossMode mode = LossMode::PpoClip;
  std::vector<int> hidden = {64, 64};
  bool shared_trunk = true;

  void validate() const;
};

struct LossParts {
  double total = 0.0;
  double actor = 0.0;
  double critic = 0.0;
  double entropy = 0.0;  // mean policy entropy (the bonus before weighting)
};

// Loss and gradients over the indexed slice of a trajectory. Advantages are
// returns minus the collection-time value estimates; the critic term uses the
// current value head. Pass grads = nullptr to evaluate the loss only.
LossParts ppo_loss(const PolicyParams& p, const Trajectory& traj, const Vec& returns,
                   const std::vector<int>& idx, const TrainConfig& cfg,
                   ParamTensors* grads);

struct AdamState {
  ParamTensors m;
  ParamTensors v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
AdamState make_adam_state(const PolicyParams& p);

// In-place adaptive moment update; throws on shape mismatch.
void update(PolicyParams& p, const ParamTensors& grads, AdamState& opt, double lr);

struct EpisodeLog {
  int episode = 0;
  double episode_return = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<EpisodeLog> log;
};

// Episode loop: rollout with the current policy, then a few epochs of
// minibatch updates on the stored rollout. Fully deterministic for a fixed
// master seed (modulo the wall_ms column). If log_stream is set, one CSV row
// is flushed per episode so a crash still leaves a partial log behind.
TrainResult train(TransferEnv& env, const TrainConfig& cfg,
                  const PolicyParams* initial = nullptr,
                  std::ostream* log_stream = nullptr);

extern const char* kTrainingLogHeader;  // "episode,return,actor_loss,..."

// Versioned JSON policy file; round-trips bit-exactly. load_policy validates
// format, version and tensor shapes, and the input dimension when
// expected_input_dim >= 0.
void save_policy(const PolicyParams& p, const std::string& path);
PolicyParams load_policy(const std::string& path, int expected_input_dim = -1);

}  // namespace flowtune
