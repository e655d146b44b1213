#include "retarget/env.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace retarget {

Reference build_reference(const MotionClip& clip, const CharacterSpec& spec, double control_fps) {
  Reference ref;
  ref.clip = std::abs(clip.fps - control_fps) < 1e-9 ? clip : resample(clip, control_fps);
  const ContactLabels labels = label_contacts(ref.clip);
  ref.kin = retarget_clip(ref.clip, spec, labels);
  ref.root_scale = spec.retarget.root_scale(spec.total_height, ref.clip.subject_height);
  ref.scale_horizontal = spec.retarget.scale_horizontal;
  for (const auto& s : synthesize_sensors(ref.clip)) ref.sensors.push_back(scale_sensor(s, ref.root_scale, ref.scale_horizontal));
  const int head = ref.clip.skeleton.index_of(HumanJointNames{}.head);
  for (const auto& f : ref.clip.frames) {
    const auto poses = joint_world_poses(ref.clip.skeleton, f);
    ref.human.push_back({f.root_orientation.normalized(), poses[head].rotation.normalized()});
  }
  if (ref.num_frames() < 2) throw std::invalid_argument("reference clip needs at least two frames");
  return ref;
}

Env::Env(std::shared_ptr<const Simulator> sim, std::shared_ptr<const std::vector<Reference>> refs,
         const EnvConfig& config, std::uint64_t seed)
    : sim_(std::move(sim)), refs_(std::move(refs)), config_(config), rng_(seed) {
  if (refs_->empty()) throw std::invalid_argument("Env needs at least one reference clip");
  const CharacterSpec& spec = sim_->spec();
  layout_ = observation_layout(spec, (*refs_)[0].clip.skeleton.size(), config_.obs);
  reward_params_ = spec.reward;
  if (!config_.contact_reward) reward_params_.contact.w = 0.0;
  if (!config_.orientation_reward) reward_params_.orientation.w = 0.0;
  weights_ = imitation_weights(spec);
  reset();
}

void Env::reset() {
  std::size_t total = 0;
  for (const auto& r : *refs_) total += r.num_frames() - 1;
  // every frame that has a successor is equally likely
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::size_t k = pick(rng_);
  int clip = 0;
  while (k >= static_cast<std::size_t>((*refs_)[clip].num_frames() - 1)) {
    k -= (*refs_)[clip].num_frames() - 1;
    ++clip;
  }
  reset_to(clip, static_cast<int>(k));
}

void Env::reset_to(int clip, int frame) {
  clip_ = clip;
  frame_ = frame;
  steps_ = 0;
  const Reference& ref = (*refs_)[clip_];
  if (frame_ < 0 || frame_ >= ref.num_frames() - 1) throw std::out_of_range("reset frame outside the clip");
  sim_->set_pose(state_, ref.kin[frame_], true);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng_);
  headset_only_ = config_.headset_only || draw < config_.controller_dropout;
  prev_action_ = VecX::Zero(spec().num_active_dofs());
}

VecX Env::policy_obs() const {
  const Reference& ref = (*refs_)[clip_];
  const SensorFrame& cur = ref.sensors[frame_];
  const SensorFrame& prev = ref.sensors[frame_ > 0 ? frame_ - 1 : 0];
  return build_policy_obs(state_, prev, cur, spec(), headset_only_);
}

VecX Env::critic_obs(const VecX& policy_obs) const {
  if (!config_.obs.asymmetric_critic) return policy_obs;
  const Reference& ref = (*refs_)[clip_];
  std::vector<const MocapFrame*> window;
  for (int k = 0; k <= config_.obs.future_frames; ++k)
    window.push_back(&ref.clip.frames[std::min(frame_ + k, ref.num_frames() - 1)]);
  return build_critic_obs(policy_obs, window, heading_frame(state_), ref.root_scale, ref.scale_horizontal);
}

StepResult Env::step(const VecX& action) {
  const CharacterSpec& s = spec();
  const Reference& ref = (*refs_)[clip_];
  StepResult out;
  const VecX a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const VecX torques = sim_->apply_action(state_, a);
  ++frame_;
  ++steps_;
  out.episode_length = steps_;
  const KinematicPose& kin = ref.kin[frame_];
  out.human_left = kin.left_contact;
  out.human_right = kin.right_contact;
  try {
    const ContactReport report = sim_->step(state_, torques, 1.0 / config_.control_fps, config_.substeps);
    out.foot_forces = report.foot_forces;
  } catch (const SimulationDiverged&) {
    out.diverged = true;
    out.termination = Termination::Fail;
    out.reward.fail = reward_params_.fail_reward;
    out.reward.sum();
    out.foot_forces.assign(s.feet_links.size(), 0.0);
    prev_action_ = a;
    return out;
  }

  RewardBreakdown& r = out.reward;
  const ImitationDistances d = imitation_distances(state_, kin, ref.human[frame_], s, weights_);
  const RewardParams& p = reward_params_;
  r.q = p.q.w > 0.0 ? kernel(p.q.w, p.q.k, d.q) : 0.0;
  r.qdot = p.qdot.w > 0.0 ? kernel(p.qdot.w, p.qdot.k, d.qdot) : 0.0;
  r.x = p.x.w > 0.0 ? kernel(p.x.w, p.x.k, d.x) : 0.0;
  r.xdot = p.xdot.w > 0.0 ? kernel(p.xdot.w, p.xdot.k, d.xdot) : 0.0;
  r.orientation = p.orientation.w > 0.0 ? kernel(p.orientation.w, p.orientation.k, d.orientation) : 0.0;
  r.contact = contact_reward(out.foot_forces, kin.left_contact, kin.right_contact, p);
  action_reward(prev_action_, a, p, r);
  prev_action_ = a;

  out.termination = check_termination(state_, kin.root_position, steps_, s);
  if (out.termination == Termination::Continue && frame_ + 1 >= ref.num_frames()) out.termination = Termination::Reset;
  if (out.termination == Termination::Fail) r.fail = p.fail_reward;
  r.sum();
  return out;
}

namespace {

void write_vec_text(std::ostream& os, const VecX& v) {
  os << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v[i];
  os << '\n';
}

VecX read_vec_text(std::istream& is) {
  Eigen::Index n = 0;
  is >> n;
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) is >> v[i];
  return v;
}

}  // namespace

void Env::write(std::ostream& os) const {
  os.precision(17);
  os << clip_ << ' ' << frame_ << ' ' << steps_ << ' ' << headset_only_ << '\n';
  os << rng_ << '\n';
  write_vec_text(os, state_.q);
  write_vec_text(os, state_.qd);
  os << state_.time << ' ' << state_.anchors.size() << '\n';
  for (const auto& a : state_.anchors) os << a.x() << ' ' << a.y() << ' ' << a.z() << '\n';
  os << state_.foot_forces.size();
  for (double f : state_.foot_forces) os << ' ' << f;
  os << '\n';
  write_vec_text(os, prev_action_);
}

void Env::read(std::istream& is) {
  is >> clip_ >> frame_ >> steps_ >> headset_only_;
  is >> rng_;
  const VecX q = read_vec_text(is);
  const VecX qd = read_vec_text(is);
  double time = 0.0;
  std::size_t n = 0;
  is >> time >> n;
  std::vector<Vec3> anchors(n);
  for (auto& a : anchors) {
    std::string x, y, z;
    is >> x >> y >> z;
    a = Vec3(std::stod(x), std::stod(y), std::stod(z));
  }
  std::size_t nf = 0;
  is >> nf;
  std::vector<double> forces(nf);
  for (auto& f : forces) is >> f;
  prev_action_ = read_vec_text(is);
  if (!is) throw std::runtime_error("corrupt environment state in checkpoint");
  sim_->set_coordinates(state_, q, qd);
  // keep the stored bits; set_coordinates renormalizes the root quaternion
  state_.q = q;
  state_.link_poses = sim_->forward_kinematics(q);
  state_.time = time;
  state_.anchors = anchors;
  state_.foot_forces = forces;
}

}  // namespace retarget
