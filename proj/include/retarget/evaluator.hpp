#pragma once

#include <string>
#include <vector>

#include "retarget/ppo.hpp"

namespace retarget {

struct ContactCounts {
  long true_pos = 0, false_pos = 0, false_neg = 0, true_neg = 0;

  void add(bool predicted, bool actual);
  ContactCounts& operator+=(const ContactCounts& o);
  double precision() const;
  double recall() const;
  /// 1 when neither side ever reports contact.
  double f1() const;
};

struct EvalReport {
  std::string name;
  int steps = 0;
  int episodes = 0;
  int fails = 0;
  double root_error = 0.0;              ///< mean sim-to-kinematic root distance (m)
  double head_orientation_error = 0.0;  ///< mean head orientation distance to the human (rad)
  ContactCounts contacts;               ///< simulated feet vs human labels
  double foot_skate = 0.0;              ///< mean horizontal foot speed while in contact (m/s)
  int skate_samples = 0;
  RewardBreakdown mean_reward;

  double fail_rate() const { return episodes > 0 ? static_cast<double>(fails) / episodes : 0.0; }
  double contact_f1() const { return contacts.f1(); }

  static std::string csv_header();
  std::string csv_row() const;
  std::string summary() const;
};

struct EvalOptions {
  bool headset_only = false;
  std::string export_trajectory;  ///< empty: no export
};

/// Runs the policy mean (no sampling) through every clip from its first frame.
/// After a fail the character is re-initialized from the reference at the
/// current frame and the run continues to the end of the clip. The last
/// report aggregates all clips.
std::vector<EvalReport> evaluate(const PolicySnapshot& policy, const std::vector<MotionClip>& clips,
                                 const EvalOptions& options = {});

/// The retargeted kinematic motion scored with the same metrics, bypassing
/// physics. Contact is geometric: foot origin within `contact_height` of its
/// lowest height in the clip.
std::vector<EvalReport> kinematic_replay(const CharacterSpec& spec, const std::vector<MotionClip>& clips,
                                         double control_fps = 36.0, double contact_height = 0.03);

/// Trajectory text: one line per frame.
///   clip frame time q[0..nq) then per link px py pz qw qx qy qz
std::string trajectory_header(const CharacterSpec& spec);

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  EvalReport train_clips;     ///< aggregate over the training clips
  EvalReport held_out_clips;  ///< aggregate over the held-out clips
};

/// Trains every variant with every seed (the same seeds for all variants)
/// and evaluates each result on the training and held-out clips.
std::vector<AblationRun> ablate(const CharacterSpec& character, const std::vector<MotionClip>& train_clips,
                                const std::vector<MotionClip>& held_out, const std::vector<AblationVariant>& variants,
                                const std::vector<std::uint64_t>& seeds, bool verbose = false);

}  // namespace retarget
