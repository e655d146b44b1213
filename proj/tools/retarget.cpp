// Command-line front end: train, eval, ablate, inspect, gen-gait.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "retarget/evaluator.hpp"

using namespace retarget;

namespace {

std::vector<MotionClip> load_clips(const std::string& manifest) {
  std::vector<MotionClip> clips;
  for (const auto& entry : load_manifest(manifest)) clips.push_back(load_clip(entry));
  if (clips.empty()) throw std::runtime_error("manifest " + manifest + " lists no clips");
  return clips;
}

void write_reports(const std::vector<EvalReport>& reports, const std::string& csv_path) {
  for (const auto& r : reports) std::cout << r.summary() << '\n';
  if (csv_path.empty()) return;
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("cannot write " + csv_path);
  f << EvalReport::csv_header() << '\n';
  for (const auto& r : reports) f << r.csv_row() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-based retargeting of sparse headset and controller input"};
  app.require_subcommand(1);

  std::string character, clips, config, out, checkpoint, metrics, traj, resume, held_out, gait_out;
  std::uint64_t seed = 1;
  int updates = -1;
  bool quiet = false, headset_only = false, kinematic = false;
  std::vector<std::string> variants{"contact_off", "symmetric_critic"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  GaitParams gait;

  auto* train = app.add_subcommand("train", "train a policy");
  train->add_option("--character", character, "character file")->required()->check(CLI::ExistingFile);
  train->add_option("--clips", clips, "clip manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--config", config, "training config")->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "random seed");
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--updates", updates, "override the number of updates");
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_flag("--quiet", quiet, "no per-update log");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint deterministically");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--clips", clips, "clip manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", metrics, "metrics CSV");
  eval->add_option("--export-traj", traj, "trajectory text file");
  eval->add_flag("--headset-only", headset_only, "zero the controller inputs");
  eval->add_flag("--kinematic", kinematic, "also report the kinematic replay");

  auto* abl = app.add_subcommand("ablate", "paired-seed ablations");
  abl->add_option("--character", character, "character file")->required()->check(CLI::ExistingFile);
  abl->add_option("--clips", clips, "training clip manifest")->required()->check(CLI::ExistingFile);
  abl->add_option("--held-out", held_out, "held-out clip manifest")->check(CLI::ExistingFile);
  abl->add_option("--config", config, "base training config")->check(CLI::ExistingFile);
  abl->add_option("--variants", variants, "contact_off, symmetric_critic, headset_only, no_orientation");
  abl->add_option("--seeds", seeds, "seeds shared by all variants");
  abl->add_option("--updates", updates, "override the number of updates");
  abl->add_option("--out", metrics, "results CSV");

  auto* inspect = app.add_subcommand("inspect", "print the character and observation layout");
  inspect->add_option("--character", character, "character file")->required()->check(CLI::ExistingFile);
  inspect->add_option("--config", config, "training config")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-gait", "write a procedural walking clip as BVH");
  gen->add_option("--stride", gait.stride_length, "root advance per cycle (m)");
  gen->add_option("--period", gait.period, "cycle duration (s)");
  gen->add_option("--duration", gait.duration, "clip length (s)");
  gen->add_option("--height", gait.subject_height, "subject height (m)");
  gen->add_option("--heading", gait.heading, "walking direction (rad)");
  gen->add_option("--fps", gait.fps, "frame rate");
  gen->add_option("--out", gait_out, "BVH file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
    if (updates >= 0) cfg.updates = updates;

    if (*train) {
      cfg.seed = seed;
      Trainer trainer(load_character(character), load_clips(clips), cfg);
      if (!resume.empty()) trainer.load(resume);
      trainer.train(out, !quiet);
      std::cout << "checkpoint written to " << out << "/latest.bin\n";
    } else if (*eval) {
      const PolicySnapshot snap = load_policy(checkpoint);
      const auto clip_list = load_clips(clips);
      EvalOptions opt;
      opt.headset_only = headset_only;
      opt.export_trajectory = traj;
      write_reports(evaluate(snap, clip_list, opt), metrics);
      if (kinematic) {
        std::cout << "kinematic replay:\n";
        for (const auto& r : kinematic_replay(snap.spec, clip_list, snap.config.env.control_fps))
          std::cout << r.summary() << '\n';
      }
    } else if (*abl) {
      std::vector<AblationVariant> list{{"base", cfg}};
      for (const auto& v : variants) {
        AblationVariant a{v, cfg};
        if (v == "contact_off") a.config.env.contact_reward = false;
        else if (v == "symmetric_critic") a.config.env.obs.asymmetric_critic = false;
        else if (v == "headset_only") a.config.env.headset_only = true;
        else if (v == "no_orientation") a.config.env.orientation_reward = false;
        else throw std::invalid_argument("unknown variant " + v);
        list.push_back(a);
      }
      const auto runs = ablate(load_character(character), load_clips(clips),
                               held_out.empty() ? std::vector<MotionClip>{} : load_clips(held_out), list, seeds, true);
      std::ofstream f;
      if (!metrics.empty()) {
        f.open(metrics);
        f << "variant,seed,set," << EvalReport::csv_header() << '\n';
        for (const auto& r : runs) {
          f << r.variant << ',' << r.seed << ",train," << r.train_clips.csv_row() << '\n';
          if (!held_out.empty()) f << r.variant << ',' << r.seed << ",held_out," << r.held_out_clips.csv_row() << '\n';
        }
      }
    } else if (*inspect) {
      const CharacterSpec spec = apply_tail_mode(load_character(character), cfg.tail_mode);
      std::cout << spec.name << ": " << spec.num_links() << " links, " << spec.num_joints() << " joints, "
                << spec.num_dofs() << " DOF (" << spec.num_active_dofs() << " actuated), " << spec.total_mass
                << " kg\n";
      for (Region r : {Region::Upper, Region::Lower, Region::Tail, Region::Ear})
        if (spec.joint_count(r) > 0) std::cout << "  " << to_string(r) << " joints: " << spec.joint_count(r) << '\n';
      const int human_joints = static_cast<int>(standard_human_skeleton(1.8).size());
      std::cout << observation_layout(spec, human_joints, cfg.env.obs).manifest();
    } else if (*gen) {
      const MotionClip clip = generate_gait(gait);
      std::ofstream f(gait_out);
      if (!f) throw std::runtime_error("cannot write " + gait_out);
      f << serialize_bvh(clip);
      std::cout << clip.num_frames() << " frames written to " << gait_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
