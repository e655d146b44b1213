#include "retarget/evaluator.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "retarget/kinematics.hpp"

namespace retarget {

void ContactCounts::add(bool predicted, bool actual) {
  if (predicted && actual) ++true_pos;
  else if (predicted) ++false_pos;
  else if (actual) ++false_neg;
  else ++true_neg;
}

ContactCounts& ContactCounts::operator+=(const ContactCounts& o) {
  true_pos += o.true_pos;
  false_pos += o.false_pos;
  false_neg += o.false_neg;
  true_neg += o.true_neg;
  return *this;
}

double ContactCounts::precision() const {
  return true_pos + false_pos > 0 ? static_cast<double>(true_pos) / (true_pos + false_pos) : 1.0;
}

double ContactCounts::recall() const {
  return true_pos + false_neg > 0 ? static_cast<double>(true_pos) / (true_pos + false_neg) : 1.0;
}

double ContactCounts::f1() const {
  const long denom = 2 * true_pos + false_pos + false_neg;
  return denom > 0 ? 2.0 * true_pos / denom : 1.0;
}

std::string EvalReport::csv_header() {
  std::string h = "clip,steps,episodes,fails,fail_rate,root_error,head_orientation_error,contact_precision,"
                  "contact_recall,contact_f1,foot_skate";
  for (const auto& n : RewardBreakdown::names()) h += ",reward_" + n;
  return h;
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << name << ',' << steps << ',' << episodes << ',' << fails << ',' << fail_rate() << ',' << root_error << ','
     << head_orientation_error << ',' << contacts.precision() << ',' << contacts.recall() << ',' << contact_f1() << ','
     << foot_skate;
  for (double v : mean_reward.values()) os << ',' << v;
  return os.str();
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os.precision(4);
  os << name << ": " << steps << " steps, " << fails << " fails in " << episodes << " episodes\n"
     << "  root error " << root_error << " m, head orientation error " << head_orientation_error << " rad\n"
     << "  contact F1 " << contact_f1() << " (precision " << contacts.precision() << ", recall "
     << contacts.recall() << "), foot skate " << foot_skate << " m/s\n"
     << "  mean reward " << mean_reward.total << " per step";
  return os.str();
}

namespace {

// Running sums turned into means by finish().
struct Accumulator {
  EvalReport report;
  double root = 0.0, head = 0.0, skate = 0.0;
  std::vector<double> rewards = std::vector<double>(RewardBreakdown::names().size(), 0.0);

  void add_reward(const RewardBreakdown& r) {
    const auto v = r.values();
    for (std::size_t k = 0; k < v.size(); ++k) rewards[k] += v[k];
  }

  void merge(const Accumulator& o) {
    report.steps += o.report.steps;
    report.episodes += o.report.episodes;
    report.fails += o.report.fails;
    report.contacts += o.report.contacts;
    report.skate_samples += o.report.skate_samples;
    root += o.root;
    head += o.head;
    skate += o.skate;
    for (std::size_t k = 0; k < rewards.size(); ++k) rewards[k] += o.rewards[k];
  }

  EvalReport finish() const {
    EvalReport r = report;
    const double n = std::max(1, r.steps);
    r.root_error = root / n;
    r.head_orientation_error = head / n;
    r.foot_skate = r.skate_samples > 0 ? skate / r.skate_samples : 0.0;
    RewardBreakdown& m = r.mean_reward;
    double* fields[] = {&m.q, &m.qdot, &m.x, &m.xdot, &m.orientation, &m.contact,
                        &m.action_diff, &m.action_min, &m.fail, &m.total};
    for (std::size_t k = 0; k < rewards.size(); ++k) *fields[k] = rewards[k] / n;
    return r;
  }
};

std::vector<EvalReport> finish_all(const std::vector<Accumulator>& per_clip) {
  std::vector<EvalReport> out;
  Accumulator all;
  all.report.name = "all";
  for (const auto& a : per_clip) {
    out.push_back(a.finish());
    all.merge(a);
  }
  out.push_back(all.finish());
  return out;
}

void write_trajectory_line(std::ostream& os, int clip, int frame, double time, const VecX& q,
                           const std::vector<Pose>& poses) {
  os << clip << ' ' << frame << ' ' << time;
  for (Eigen::Index i = 0; i < q.size(); ++i) os << ' ' << q[i];
  for (const auto& p : poses) {
    const Quat& r = p.rotation;
    os << ' ' << p.translation.x() << ' ' << p.translation.y() << ' ' << p.translation.z() << ' ' << r.w() << ' '
       << r.x() << ' ' << r.y() << ' ' << r.z();
  }
  os << '\n';
}

std::string clip_name(const MotionClip& clip, std::size_t index) {
  return clip.name.empty() ? "clip" + std::to_string(index) : clip.name;
}

}  // namespace

std::string trajectory_header(const CharacterSpec& spec) {
  std::ostringstream os;
  os << "# clip frame time";
  for (int i = 0; i < kRootPosDim + spec.num_dofs(); ++i) os << " q" << i;
  for (const auto& l : spec.links)
    for (const char* c : {"px", "py", "pz", "qw", "qx", "qy", "qz"}) os << ' ' << l.name << '.' << c;
  return os.str();
}

std::vector<EvalReport> evaluate(const PolicySnapshot& snap, const std::vector<MotionClip>& clips,
                                 const EvalOptions& options) {
  if (clips.empty()) throw std::invalid_argument("evaluation needs at least one clip");
  const CharacterSpec& spec = snap.spec;
  auto sim = std::make_shared<const Simulator>(spec);
  auto refs = std::make_shared<std::vector<Reference>>();
  for (const auto& c : clips) refs->push_back(build_reference(c, spec, snap.config.env.control_fps));
  EnvConfig cfg = snap.config.env;
  cfg.controller_dropout = 0.0;
  cfg.headset_only = options.headset_only;
  Env env(sim, refs, cfg, 0);
  if (env.layout().policy_dim != snap.policy.mean.input_dim())
    throw std::invalid_argument("policy input size does not match the character and clips");

  std::ofstream traj;
  if (!options.export_trajectory.empty()) {
    traj.open(options.export_trajectory);
    if (!traj) throw std::runtime_error("cannot write " + options.export_trajectory);
    traj.precision(9);
    traj << trajectory_header(spec) << '\n';
  }

  const double dt = 1.0 / cfg.control_fps;
  std::vector<Accumulator> per_clip(clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) {
    Accumulator& acc = per_clip[c];
    acc.report.name = clip_name(clips[c], c);
    const Reference& ref = (*refs)[c];
    env.reset_to(static_cast<int>(c), 0);
    acc.report.episodes = 1;
    if (traj.is_open()) write_trajectory_line(traj, c, 0, 0.0, env.state().q, env.state().link_poses);
    while (true) {
      const MatX obs = snap.norm.apply(env.policy_obs(), snap.config.obs_clip);
      const VecX action = snap.policy.mean.forward(obs.col(0));
      const StepResult res = env.step(action);
      const int frame = env.frame();
      const SimState& s = env.state();
      ++acc.report.steps;
      acc.add_reward(res.reward);
      if (!res.diverged) {
        acc.root += (s.q.head<3>() - ref.kin[frame].root_position).norm();
        if (spec.head_link >= 0)
          acc.head += orientation_distance(ref.human[frame].head, s.link_poses[spec.head_link].rotation);
        const auto vel = link_origin_velocities(spec, s.q, s.qd, s.link_poses);
        const bool human[2] = {res.human_left, res.human_right};
        for (std::size_t f = 0; f < spec.feet_links.size() && f < 2; ++f) {
          const bool touching = res.foot_forces[f] > spec.reward.contact_force_threshold;
          acc.report.contacts.add(touching, human[f]);
          if (touching) {
            const Vec3& v = vel[spec.feet_links[f]];
            acc.skate += std::hypot(v.x(), v.z());
            ++acc.report.skate_samples;
          }
        }
        if (traj.is_open()) write_trajectory_line(traj, c, frame, frame * dt, s.q, s.link_poses);
      }
      if (res.termination == Termination::Continue) continue;
      acc.report.fails += res.termination == Termination::Fail;
      if (frame + 1 >= ref.num_frames()) break;
      // restart from the reference at the current frame
      env.reset_to(static_cast<int>(c), frame);
      ++acc.report.episodes;
    }
  }
  return finish_all(per_clip);
}

std::vector<EvalReport> kinematic_replay(const CharacterSpec& spec, const std::vector<MotionClip>& clips,
                                         double control_fps, double contact_height) {
  std::vector<Accumulator> per_clip(clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const Reference ref = build_reference(clips[c], spec, control_fps);
    Accumulator& acc = per_clip[c];
    acc.report.name = clip_name(clips[c], c);
    acc.report.episodes = 1;
    std::vector<double> lowest(spec.feet_links.size(), 1e9);
    for (const auto& k : ref.kin)
      for (std::size_t f = 0; f < lowest.size(); ++f)
        lowest[f] = std::min(lowest[f], k.link_positions[spec.feet_links[f]].y());
    for (int i = 1; i < ref.num_frames(); ++i) {
      const KinematicPose& k = ref.kin[i];
      ++acc.report.steps;
      const bool human[2] = {k.left_contact, k.right_contact};
      for (std::size_t f = 0; f < spec.feet_links.size() && f < 2; ++f) {
        const int link = spec.feet_links[f];
        const bool touching = k.link_positions[link].y() < lowest[f] + contact_height;
        acc.report.contacts.add(touching, human[f]);
        if (touching) {
          const Vec3& v = k.link_velocities[link];
          acc.skate += std::hypot(v.x(), v.z());
          ++acc.report.skate_samples;
        }
      }
      if (spec.head_link >= 0) acc.head += orientation_distance(ref.human[i].head, k.link_orientations[spec.head_link]);
    }
  }
  return finish_all(per_clip);
}

std::vector<AblationRun> ablate(const CharacterSpec& character, const std::vector<MotionClip>& train_clips,
                                const std::vector<MotionClip>& held_out, const std::vector<AblationVariant>& variants,
                                const std::vector<std::uint64_t>& seeds, bool verbose) {
  std::vector<AblationRun> runs;
  for (std::uint64_t seed : seeds) {
    for (const auto& v : variants) {
      TrainConfig cfg = v.config;
      cfg.seed = seed;
      Trainer trainer(character, train_clips, cfg);
      trainer.train("", false);
      const PolicySnapshot snap = snapshot(trainer);
      AblationRun run;
      run.variant = v.name;
      run.seed = seed;
      run.train_clips = evaluate(snap, train_clips).back();
      run.held_out_clips = held_out.empty() ? EvalReport{} : evaluate(snap, held_out).back();
      if (verbose)
        std::cout << v.name << " seed " << seed << ": train F1 " << run.train_clips.contact_f1() << ", fail rate "
                  << run.train_clips.fail_rate() << "; held-out F1 " << run.held_out_clips.contact_f1()
                  << ", fail rate " << run.held_out_clips.fail_rate() << std::endl;
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

}  // namespace retarget
