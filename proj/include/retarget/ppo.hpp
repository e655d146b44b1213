#pragma once

#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "retarget/env.hpp"
#include "retarget/nn.hpp"

namespace retarget {

struct TrainConfig {
  double learning_rate = 1.2e-4;
  int num_envs = 64;
  int episode_steps = 16;  ///< rollout segment per env per update
  int epochs = 5;
  int minibatch = 128;
  double gamma = 0.97;
  double lambda = 0.95;
  double value_coef = 0.2;
  double clip = 0.2;
  double max_grad_norm = 1.0;
  double sigma = 0.02;
  std::vector<int> policy_hidden{300, 200, 100};
  std::vector<int> value_hidden{400, 400, 300, 200};
  double obs_clip = 10.0;       ///< normalized observations are clipped to +-obs_clip
  bool scale_value = true;      ///< the value net predicts (1 - gamma) V
  int updates = 300;
  int checkpoint_every = 50;    ///< 0: only the final checkpoint
  std::uint64_t seed = 1;
  std::string tail_mode;        ///< empty: as configured, else active | passive | fixed
  EnvConfig env;

  void validate() const;
};

TrainConfig parse_train_config(const std::string& yaml_text);
TrainConfig load_train_config(const std::string& path);
std::string to_yaml(const TrainConfig& config);

/// Character as trained: the file's spec with the configured tail mode.
CharacterSpec apply_tail_mode(const CharacterSpec& spec, const std::string& tail_mode);

/// Running mean and variance of observation entries.
class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(int dim) : mean_(VecX::Zero(dim)), m2_(VecX::Zero(dim)) {}

  void update(const MatX& batch);  ///< one column per sample
  MatX apply(const MatX& x, double clip) const;
  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const VecX& mean() const { return mean_; }
  VecX stddev() const;

  void write(std::ostream& os) const;
  static RunningNorm read(std::istream& is);

 private:
  VecX mean_, m2_;
  double count_ = 0.0;
};

/// Transitions stored step-major: index = t * num_envs + env. Observations
/// are already normalized.
struct RolloutBuffer {
  int num_envs = 0;
  int steps = 0;
  MatX policy_obs, critic_obs, actions;
  VecX log_probs, values, rewards;
  VecX next_values;        ///< value of the successor state (0 after a fail)
  std::vector<char> ends;  ///< episode ended at this transition
  std::vector<Termination> terminations;
  std::vector<RewardBreakdown> breakdown;
  int diverged = 0;
  VecX advantages, returns;

  int size() const { return num_envs * steps; }
  int index(int env, int t) const { return t * num_envs + env; }
  bool operator==(const RolloutBuffer& o) const;
};

struct GaeResult {
  VecX advantages;
  VecX returns;
};

/// Backward GAE recursion for one sequence. next_values[t] is the value of
/// the state after transition t; ends[t] cuts the recursion.
GaeResult compute_gae(const VecX& rewards, const VecX& values, const VecX& next_values,
                      const std::vector<char>& ends, double gamma, double lambda);
/// Same with terminal dones (bootstrap 0) and one bootstrap value after the
/// last step.
GaeResult compute_gae(const VecX& rewards, const VecX& values, const std::vector<char>& dones, double bootstrap,
                      double gamma, double lambda);
/// Zero mean, unit variance.
void normalize_advantages(VecX& adv);

struct UpdateStats {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double policy_grad_norm = 0.0;
  double value_grad_norm = 0.0;
};

/// One row of the metrics CSV.
struct UpdateMetrics {
  int update = 0;
  RewardBreakdown mean_reward;  ///< per-step means over the rollout
  double episode_length = 0.0;  ///< mean over the last 100 finished episodes
  double fail_rate = 0.0;       ///< fails / finished episodes in this rollout
  int episodes = 0;
  int diverged = 0;
  UpdateStats stats;
  double wall_seconds = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct SurrogateGrad {
  VecX grad;  ///< gradient of the negated clipped surrogate wrt the mean network
  double surrogate = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// Minibatch gradient of -mean(min(rho A, clip(rho) A)).
SurrogateGrad surrogate_gradient(const GaussianPolicy& policy, const MatX& obs, const MatX& actions,
                                 const VecX& old_log_probs, const VecX& advantages, double clip);

/// Clipped-surrogate PPO update of `policy` and `value` on a buffer whose
/// advantages and returns are filled in.
UpdateStats ppo_update(const RolloutBuffer& buffer, GaussianPolicy& policy, Mlp& value, Adam& policy_adam,
                       Adam& value_adam, const TrainConfig& config, std::mt19937_64& rng);

class Trainer {
 public:
  Trainer(const CharacterSpec& character, const std::vector<MotionClip>& clips, const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  const CharacterSpec& spec() const { return sim_->spec(); }
  const GaussianPolicy& policy() const { return policy_; }
  const Mlp& value() const { return value_; }
  const RunningNorm& policy_norm() const { return policy_norm_; }
  const ObsLayout& layout() const { return envs_.front().layout(); }
  int updates_done() const { return update_; }
  std::shared_ptr<const std::vector<Reference>> references() const { return refs_; }

  /// Rollout with the current networks and frozen normalizers.
  RolloutBuffer collect();
  /// GAE, advantage normalization and the PPO epochs.
  UpdateStats update(RolloutBuffer& buffer);
  /// collect + update + normalizer refresh.
  UpdateMetrics train_step();

  /// Runs the remaining updates, writing checkpoints and CSV rows into `out_dir` if non-empty.
  void train(const std::string& out_dir, bool verbose = false);

  void save(const std::string& path) const;
  /// Restores networks, optimizers, normalizers and environment states.
  void load(const std::string& path);

 private:
  TrainConfig config_;
  std::shared_ptr<const Simulator> sim_;
  std::shared_ptr<const std::vector<Reference>> refs_;
  std::vector<Env> envs_;
  GaussianPolicy policy_;
  Mlp value_;
  Adam policy_adam_, value_adam_;
  RunningNorm policy_norm_, critic_norm_;
  RunningNorm next_policy_norm_, next_critic_norm_;
  std::mt19937_64 rng_;
  int update_ = 0;
  std::deque<int> recent_lengths_;
  int pending_fails_ = 0, pending_episodes_ = 0;
};

/// Policy half of a checkpoint, enough for evaluation.
struct PolicySnapshot {
  TrainConfig config;
  CharacterSpec spec;  ///< as trained (tail mode applied)
  GaussianPolicy policy;
  RunningNorm norm;
  int updates = 0;
};

PolicySnapshot load_policy(const std::string& checkpoint_path);
PolicySnapshot snapshot(const Trainer& trainer);

}  // namespace retarget
