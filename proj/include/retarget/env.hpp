#pragma once

#include <iosfwd>
#include <memory>
#include <random>
#include <vector>

#include "retarget/observation.hpp"
#include "retarget/retarget.hpp"
#include "retarget/reward.hpp"

namespace retarget {

/// One clip prepared for a character at the control rate.
struct Reference {
  MotionClip clip;                      ///< resampled human clip
  std::vector<KinematicPose> kin;       ///< retargeted targets with contact labels
  std::vector<SensorFrame> sensors;     ///< synthetic devices, scaled into character space
  std::vector<HumanOrientation> human;  ///< human root and head orientations
  double root_scale = 1.0;
  bool scale_horizontal = true;

  int num_frames() const { return static_cast<int>(kin.size()); }
};

Reference build_reference(const MotionClip& clip, const CharacterSpec& spec, double control_fps);

struct EnvConfig {
  double control_fps = 36.0;
  int substeps = 4;
  ObsConfig obs;
  double controller_dropout = 0.1;  ///< chance per episode of headset-only input
  bool headset_only = false;        ///< force headset-only input
  bool contact_reward = true;
  bool orientation_reward = true;
};

struct StepResult {
  RewardBreakdown reward;
  Termination termination = Termination::Continue;
  bool diverged = false;
  int episode_length = 0;  ///< steps taken in the episode, including this one
  std::vector<double> foot_forces;
  bool human_left = false, human_right = false;
};

/// Character tracking one reference at a time. The model data (simulator,
/// references) is shared and read-only.
class Env {
 public:
  Env(std::shared_ptr<const Simulator> sim, std::shared_ptr<const std::vector<Reference>> refs,
      const EnvConfig& config, std::uint64_t seed);

  const CharacterSpec& spec() const { return sim_->spec(); }
  const EnvConfig& config() const { return config_; }
  const ObsLayout& layout() const { return layout_; }

  /// Reference-state initialization from a uniformly drawn clip frame.
  void reset();
  /// Starts at a given clip frame.
  void reset_to(int clip, int frame);

  VecX policy_obs() const;
  VecX critic_obs(const VecX& policy_obs) const;

  /// Applies the clamped, rescaled action for one control step and scores
  /// the next frame. The caller resets after a fail or scheduled reset.
  StepResult step(const VecX& action);

  const SimState& state() const { return state_; }
  int clip_index() const { return clip_; }
  int frame() const { return frame_; }
  const Reference& reference() const { return (*refs_)[clip_]; }
  bool headset_only() const { return headset_only_; }
  std::mt19937_64& rng() { return rng_; }

  void write(std::ostream& os) const;
  void read(std::istream& is);

 private:
  std::shared_ptr<const Simulator> sim_;
  std::shared_ptr<const std::vector<Reference>> refs_;
  EnvConfig config_;
  ObsLayout layout_;
  RewardParams reward_params_;
  VecX weights_;
  std::mt19937_64 rng_;

  SimState state_;
  int clip_ = 0;
  int frame_ = 0;
  int steps_ = 0;
  bool headset_only_ = false;
  VecX prev_action_;
};

}  // namespace retarget
