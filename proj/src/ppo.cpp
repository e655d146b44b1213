#include "retarget/ppo.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace retarget {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_keys(const YAML::Node& node, const std::set<std::string>& known, const std::string& where) {
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!known.count(key)) throw std::invalid_argument("unknown " + where + " key '" + key + "'");
  }
}

void write_string(std::ostream& os, const std::string& s) {
  write_i64(os, static_cast<std::int64_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::int64_t n = read_i64(is);
  if (n < 0 || n > (std::int64_t(1) << 32)) throw std::runtime_error("corrupt string in checkpoint");
  std::string s(static_cast<std::size_t>(n), '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return s;
}

constexpr const char* kMagic = "RETARGET-CKPT";
constexpr std::int64_t kVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in [0, 1]");
  if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (num_envs <= 0 || episode_steps <= 0 || epochs <= 0 || minibatch <= 0)
    throw std::invalid_argument("num_envs, episode_steps, epochs and minibatch must be positive");
  if (minibatch > num_envs * episode_steps) throw std::invalid_argument("minibatch larger than the rollout");
  if (updates < 0) throw std::invalid_argument("updates must not be negative");
  if (env.substeps <= 0 || !(env.control_fps > 0.0)) throw std::invalid_argument("bad control rate");
  if (env.obs.future_frames < 0) throw std::invalid_argument("future_frames must not be negative");
  if (!tail_mode.empty() && tail_mode != "active" && tail_mode != "passive" && tail_mode != "fixed")
    throw std::invalid_argument("tail_mode must be active, passive or fixed");
}

TrainConfig parse_train_config(const std::string& yaml_text) {
  TrainConfig c;
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  if (!root || root.IsNull()) {
    c.validate();
    return c;
  }
  check_keys(root,
             {"learning_rate", "num_envs", "episode_steps", "epochs", "minibatch", "gamma", "lambda", "value_coef",
              "clip", "max_grad_norm", "sigma", "policy_hidden", "value_hidden", "obs_clip", "scale_value", "updates",
              "checkpoint_every", "seed", "tail_mode", "env"},
             "train config");
  auto get = [&](const char* key, auto& value) {
    if (root[key]) value = root[key].as<std::decay_t<decltype(value)>>();
  };
  get("learning_rate", c.learning_rate);
  get("num_envs", c.num_envs);
  get("episode_steps", c.episode_steps);
  get("epochs", c.epochs);
  get("minibatch", c.minibatch);
  get("gamma", c.gamma);
  get("lambda", c.lambda);
  get("value_coef", c.value_coef);
  get("clip", c.clip);
  get("max_grad_norm", c.max_grad_norm);
  get("sigma", c.sigma);
  get("policy_hidden", c.policy_hidden);
  get("value_hidden", c.value_hidden);
  get("obs_clip", c.obs_clip);
  get("scale_value", c.scale_value);
  get("updates", c.updates);
  get("checkpoint_every", c.checkpoint_every);
  get("seed", c.seed);
  get("tail_mode", c.tail_mode);
  if (const YAML::Node e = root["env"]) {
    check_keys(e,
               {"control_fps", "substeps", "future_frames", "asymmetric_critic", "controller_dropout", "headset_only",
                "contact_reward", "orientation_reward"},
               "env");
    auto eget = [&](const char* key, auto& value) {
      if (e[key]) value = e[key].as<std::decay_t<decltype(value)>>();
    };
    eget("control_fps", c.env.control_fps);
    eget("substeps", c.env.substeps);
    eget("future_frames", c.env.obs.future_frames);
    eget("asymmetric_critic", c.env.obs.asymmetric_critic);
    eget("controller_dropout", c.env.controller_dropout);
    eget("headset_only", c.env.headset_only);
    eget("contact_reward", c.env.contact_reward);
    eget("orientation_reward", c.env.orientation_reward);
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open train config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_train_config(ss.str());
}

std::string to_yaml(const TrainConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "learning_rate" << YAML::Value << c.learning_rate;
  out << YAML::Key << "num_envs" << YAML::Value << c.num_envs;
  out << YAML::Key << "episode_steps" << YAML::Value << c.episode_steps;
  out << YAML::Key << "epochs" << YAML::Value << c.epochs;
  out << YAML::Key << "minibatch" << YAML::Value << c.minibatch;
  out << YAML::Key << "gamma" << YAML::Value << c.gamma;
  out << YAML::Key << "lambda" << YAML::Value << c.lambda;
  out << YAML::Key << "value_coef" << YAML::Value << c.value_coef;
  out << YAML::Key << "clip" << YAML::Value << c.clip;
  out << YAML::Key << "max_grad_norm" << YAML::Value << c.max_grad_norm;
  out << YAML::Key << "sigma" << YAML::Value << c.sigma;
  out << YAML::Key << "policy_hidden" << YAML::Value << YAML::Flow << c.policy_hidden;
  out << YAML::Key << "value_hidden" << YAML::Value << YAML::Flow << c.value_hidden;
  out << YAML::Key << "obs_clip" << YAML::Value << c.obs_clip;
  out << YAML::Key << "scale_value" << YAML::Value << c.scale_value;
  out << YAML::Key << "updates" << YAML::Value << c.updates;
  out << YAML::Key << "checkpoint_every" << YAML::Value << c.checkpoint_every;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "tail_mode" << YAML::Value << c.tail_mode;
  out << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "control_fps" << YAML::Value << c.env.control_fps;
  out << YAML::Key << "substeps" << YAML::Value << c.env.substeps;
  out << YAML::Key << "future_frames" << YAML::Value << c.env.obs.future_frames;
  out << YAML::Key << "asymmetric_critic" << YAML::Value << c.env.obs.asymmetric_critic;
  out << YAML::Key << "controller_dropout" << YAML::Value << c.env.controller_dropout;
  out << YAML::Key << "headset_only" << YAML::Value << c.env.headset_only;
  out << YAML::Key << "contact_reward" << YAML::Value << c.env.contact_reward;
  out << YAML::Key << "orientation_reward" << YAML::Value << c.env.orientation_reward;
  out << YAML::EndMap << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

CharacterSpec apply_tail_mode(const CharacterSpec& spec, const std::string& tail_mode) {
  if (tail_mode.empty()) return spec;
  if (tail_mode == "active") return with_tail_mode(spec, TailMode::Active);
  if (tail_mode == "passive") return with_tail_mode(spec, TailMode::Passive);
  if (tail_mode == "fixed") return with_tail_mode(spec, TailMode::Fixed);
  throw std::invalid_argument("unknown tail mode '" + tail_mode + "'");
}

// ---------------------------------------------------------------------------
// Normalizer

void RunningNorm::update(const MatX& batch) {
  const double n = static_cast<double>(batch.cols());
  if (n == 0.0) return;
  const VecX bmean = batch.rowwise().mean();
  const VecX bm2 = (batch.colwise() - bmean).rowwise().squaredNorm();
  const double total = count_ + n;
  const VecX delta = bmean - mean_;
  mean_ += delta * (n / total);
  m2_ += bm2 + delta.cwiseAbs2() * (count_ * n / total);
  count_ = total;
}

VecX RunningNorm::stddev() const {
  if (count_ < 2.0) return VecX::Ones(mean_.size());
  return (m2_ / count_ + VecX::Constant(mean_.size(), 1e-4)).cwiseSqrt();
}

MatX RunningNorm::apply(const MatX& x, double clip) const {
  const VecX inv = stddev().cwiseInverse();
  MatX out = (x.colwise() - mean_).array().colwise() * inv.array();
  return out.cwiseMax(-clip).cwiseMin(clip);
}

void RunningNorm::write(std::ostream& os) const {
  write_f64(os, count_);
  write_vec(os, mean_);
  write_vec(os, m2_);
}

RunningNorm RunningNorm::read(std::istream& is) {
  RunningNorm n;
  n.count_ = read_f64(is);
  n.mean_ = read_vec(is);
  n.m2_ = read_vec(is);
  return n;
}

// ---------------------------------------------------------------------------
// GAE

GaeResult compute_gae(const VecX& rewards, const VecX& values, const VecX& next_values,
                      const std::vector<char>& ends, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || next_values.size() != n || static_cast<Eigen::Index>(ends.size()) != n)
    throw std::invalid_argument("compute_gae: length mismatch");
  GaeResult r;
  r.advantages.resize(n);
  double running = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double delta = rewards[t] + gamma * next_values[t] - values[t];
    running = delta + (ends[t] ? 0.0 : gamma * lambda * running);
    r.advantages[t] = running;
  }
  r.returns = r.advantages + values;
  return r;
}

GaeResult compute_gae(const VecX& rewards, const VecX& values, const std::vector<char>& dones, double bootstrap,
                      double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw std::invalid_argument("compute_gae: length mismatch");
  VecX next(n);
  for (Eigen::Index t = 0; t < n; ++t) next[t] = dones[t] ? 0.0 : (t + 1 < n ? values[t + 1] : bootstrap);
  return compute_gae(rewards, values, next, dones, gamma, lambda);
}

void normalize_advantages(VecX& adv) {
  if (adv.size() < 2) return;
  const double mean = adv.mean();
  adv.array() -= mean;
  const double std = std::sqrt(adv.squaredNorm() / static_cast<double>(adv.size()));
  if (std > 1e-12) adv /= std;
}

bool RolloutBuffer::operator==(const RolloutBuffer& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.cwiseEqual(b).all();
  };
  if (num_envs != o.num_envs || steps != o.steps || diverged != o.diverged) return false;
  if (!same(policy_obs, o.policy_obs) || !same(critic_obs, o.critic_obs) || !same(actions, o.actions)) return false;
  if (!same(log_probs, o.log_probs) || !same(values, o.values) || !same(rewards, o.rewards)) return false;
  if (!same(next_values, o.next_values) || ends != o.ends || terminations != o.terminations) return false;
  for (std::size_t i = 0; i < breakdown.size(); ++i)
    if (breakdown[i].values() != o.breakdown[i].values()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Update

SurrogateGrad surrogate_gradient(const GaussianPolicy& policy, const MatX& obs, const MatX& actions,
                                 const VecX& old_log_probs, const VecX& adv, double clip) {
  const int m = static_cast<int>(obs.cols());
  const int adim = static_cast<int>(actions.rows());
  const double sigma2 = policy.sigma * policy.sigma;
  const double log_norm = adim * std::log(policy.sigma * std::sqrt(2.0 * M_PI));
  SurrogateGrad out;
  Mlp::Cache cache;
  const MatX mu = policy.mean.forward_batch(obs, &cache);
  MatX d_mu = MatX::Zero(adim, m);
  for (int k = 0; k < m; ++k) {
    const VecX diff = actions.col(k) - mu.col(k);
    const double lp = -0.5 * diff.squaredNorm() / sigma2 - log_norm;
    const double ratio = std::exp(lp - old_log_probs[k]);
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    out.surrogate += std::min(ratio * adv[k], clipped_ratio * adv[k]);
    const bool flat = (adv[k] > 0.0 && ratio > 1.0 + clip) || (adv[k] < 0.0 && ratio < 1.0 - clip);
    if (!flat) d_mu.col(k) = -(adv[k] * ratio / m) * diff / sigma2;
    out.clip_fraction += std::abs(ratio - 1.0) > clip;
    out.approx_kl += old_log_probs[k] - lp;
  }
  out.surrogate /= m;
  out.clip_fraction /= m;
  out.approx_kl /= m;
  out.grad = VecX::Zero(policy.mean.num_params());
  policy.mean.backward(cache, d_mu, out.grad, false);
  return out;
}

UpdateStats ppo_update(const RolloutBuffer& b, GaussianPolicy& policy, Mlp& value, Adam& policy_adam,
                       Adam& value_adam, const TrainConfig& config, std::mt19937_64& rng) {
  const int n = b.size();
  const int adim = static_cast<int>(b.actions.rows());
  const double target_scale = config.scale_value ? 1.0 - config.gamma : 1.0;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  UpdateStats stats;
  int batches = 0;
  double samples = 0.0;
  VecX gv(value.num_params());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += config.minibatch) {
      const int m = std::min(config.minibatch, n - start);
      MatX P(b.policy_obs.rows(), m), C(b.critic_obs.rows(), m), A(adim, m);
      VecX lp_old(m), adv(m), ret(m);
      for (int k = 0; k < m; ++k) {
        const int i = order[start + k];
        P.col(k) = b.policy_obs.col(i);
        C.col(k) = b.critic_obs.col(i);
        A.col(k) = b.actions.col(i);
        lp_old[k] = b.log_probs[i];
        adv[k] = b.advantages[i];
        ret[k] = b.returns[i];
      }

      SurrogateGrad sg = surrogate_gradient(policy, P, A, lp_old, adv, config.clip);
      VecX& gp = sg.grad;
      stats.policy_grad_norm += clip_grad_norm(gp, config.max_grad_norm);
      stats.clip_fraction += sg.clip_fraction * m;
      stats.approx_kl += sg.approx_kl * m;
      const double surrogate = sg.surrogate;

      Mlp::Cache vc;
      const MatX v = value.forward_batch(C, &vc);
      const VecX err = v.row(0).transpose() - ret * target_scale;
      const double value_loss = config.value_coef * err.squaredNorm() / m;
      gv.setZero();
      value.backward(vc, (2.0 * config.value_coef / m) * err.transpose(), gv, false);
      stats.value_grad_norm += clip_grad_norm(gv, config.max_grad_norm);

      if (!std::isfinite(surrogate) || !std::isfinite(value_loss) || !gp.allFinite() || !gv.allFinite()) {
        std::ostringstream os;
        os << "PPO update produced a non-finite loss (epoch " << epoch << ", surrogate " << surrogate
           << ", value loss " << value_loss << ")";
        throw std::runtime_error(os.str());
      }
      policy_adam.step(policy.mean.params(), gp, config.learning_rate);
      value_adam.step(value.params(), gv, config.learning_rate);

      stats.surrogate += surrogate;
      stats.value_loss += value_loss;
      samples += m;
      ++batches;
    }
  }
  if (batches > 0) {
    stats.surrogate /= batches;
    stats.value_loss /= batches;
    stats.policy_grad_norm /= batches;
    stats.value_grad_norm /= batches;
    stats.clip_fraction /= samples;
    stats.approx_kl /= samples;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Metrics

std::string UpdateMetrics::csv_header() {
  std::string h = "update";
  for (const auto& name : RewardBreakdown::names()) h += ",reward_" + name;
  h += ",episode_length,fail_rate,episodes,diverged,surrogate,value_loss,clip_fraction,approx_kl,wall_seconds";
  return h;
}

std::string UpdateMetrics::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << update;
  for (double v : mean_reward.values()) os << ',' << v;
  os << ',' << episode_length << ',' << fail_rate << ',' << episodes << ',' << diverged << ',' << stats.surrogate << ','
     << stats.value_loss << ',' << stats.clip_fraction << ',' << stats.approx_kl << ',' << wall_seconds;
  return os.str();
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const CharacterSpec& character, const std::vector<MotionClip>& clips, const TrainConfig& config)
    : config_(config), rng_(splitmix(config.seed)) {
  config_.validate();
  if (clips.empty()) throw std::invalid_argument("training needs at least one clip");
  const CharacterSpec spec = apply_tail_mode(character, config_.tail_mode);
  sim_ = std::make_shared<const Simulator>(spec);
  auto refs = std::make_shared<std::vector<Reference>>();
  for (const auto& c : clips) refs->push_back(build_reference(c, spec, config_.env.control_fps));
  refs_ = refs;
  envs_.reserve(config_.num_envs);
  for (int e = 0; e < config_.num_envs; ++e)
    envs_.emplace_back(sim_, refs_, config_.env, splitmix(config_.seed * 1000003ULL + static_cast<std::uint64_t>(e) + 1));

  const ObsLayout& layout = envs_.front().layout();
  std::vector<int> ps{layout.policy_dim};
  ps.insert(ps.end(), config_.policy_hidden.begin(), config_.policy_hidden.end());
  ps.push_back(spec.num_active_dofs());
  std::vector<int> vs{layout.critic_dim};
  vs.insert(vs.end(), config_.value_hidden.begin(), config_.value_hidden.end());
  vs.push_back(1);
  policy_.mean = Mlp(ps);
  policy_.mean.init(rng_, 1.0, 0.01);
  policy_.sigma = config_.sigma;
  value_ = Mlp(vs);
  value_.init(rng_, 1.0, 1.0);
  policy_adam_ = Adam(policy_.mean.num_params());
  value_adam_ = Adam(value_.num_params());

  // seed the normalizers with the initial states
  policy_norm_ = RunningNorm(layout.policy_dim);
  critic_norm_ = RunningNorm(layout.critic_dim);
  MatX P(layout.policy_dim, config_.num_envs), C(layout.critic_dim, config_.num_envs);
  for (int e = 0; e < config_.num_envs; ++e) {
    P.col(e) = envs_[e].policy_obs();
    C.col(e) = envs_[e].critic_obs(P.col(e));
  }
  policy_norm_.update(P);
  critic_norm_.update(C);
}

RolloutBuffer Trainer::collect() {
  const int E = config_.num_envs, T = config_.episode_steps;
  const ObsLayout& layout = envs_.front().layout();
  const int adim = spec().num_active_dofs();
  const double value_scale = config_.scale_value ? 1.0 / (1.0 - config_.gamma) : 1.0;
  next_policy_norm_ = policy_norm_;
  next_critic_norm_ = critic_norm_;

  RolloutBuffer b;
  b.num_envs = E;
  b.steps = T;
  const int n = E * T;
  b.policy_obs.resize(layout.policy_dim, n);
  b.critic_obs.resize(layout.critic_dim, n);
  b.actions.resize(adim, n);
  b.log_probs.resize(n);
  b.values.resize(n);
  b.rewards.resize(n);
  b.next_values = VecX::Zero(n);
  b.ends.assign(n, 0);
  b.terminations.assign(n, Termination::Continue);
  b.breakdown.resize(n);

  auto value_of = [&](const Env& env) {
    const VecX po = env.policy_obs();
    const MatX c = critic_norm_.apply(env.critic_obs(po), config_.obs_clip);
    return value_.forward_batch(c)(0, 0) * value_scale;
  };

  MatX P_raw(layout.policy_dim, E), C_raw(layout.critic_dim, E);
  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < E; ++e) {
      P_raw.col(e) = envs_[e].policy_obs();
      C_raw.col(e) = envs_[e].critic_obs(P_raw.col(e));
    }
    next_policy_norm_.update(P_raw);
    next_critic_norm_.update(C_raw);
    const MatX P = policy_norm_.apply(P_raw, config_.obs_clip);
    const MatX C = critic_norm_.apply(C_raw, config_.obs_clip);
    const MatX mu = policy_.mean.forward_batch(P);
    const MatX v = value_.forward_batch(C) * value_scale;
    for (int e = 0; e < E; ++e) {
      const int i = b.index(e, t);
      Env& env = envs_[e];
      const VecX a = policy_.sample(mu.col(e), env.rng());
      b.policy_obs.col(i) = P.col(e);
      b.critic_obs.col(i) = C.col(e);
      b.actions.col(i) = a;
      b.log_probs[i] = policy_.log_prob(mu.col(e), a);
      b.values[i] = v(0, e);
      const StepResult res = env.step(a);
      b.rewards[i] = res.reward.total;
      b.breakdown[i] = res.reward;
      b.terminations[i] = res.termination;
      b.diverged += res.diverged;
      if (res.termination == Termination::Continue) continue;
      b.ends[i] = 1;
      b.next_values[i] = res.termination == Termination::Reset ? value_of(env) : 0.0;
      recent_lengths_.push_back(res.episode_length);
      if (recent_lengths_.size() > 100) recent_lengths_.pop_front();
      ++pending_episodes_;
      pending_fails_ += res.termination == Termination::Fail;
      env.reset();
    }
  }
  for (int e = 0; e < E; ++e) {
    for (int t = 0; t + 1 < T; ++t) {
      const int i = b.index(e, t);
      if (!b.ends[i]) b.next_values[i] = b.values[b.index(e, t + 1)];
    }
    const int last = b.index(e, T - 1);
    if (!b.ends[last]) b.next_values[last] = value_of(envs_[e]);
  }
  return b;
}

UpdateStats Trainer::update(RolloutBuffer& b) {
  const int E = b.num_envs, T = b.steps;
  b.advantages.resize(b.size());
  b.returns.resize(b.size());
  VecX r(T), v(T), nv(T);
  std::vector<char> ends(T);
  for (int e = 0; e < E; ++e) {
    for (int t = 0; t < T; ++t) {
      const int i = b.index(e, t);
      r[t] = b.rewards[i];
      v[t] = b.values[i];
      nv[t] = b.next_values[i];
      ends[t] = b.ends[i];
    }
    const GaeResult g = compute_gae(r, v, nv, ends, config_.gamma, config_.lambda);
    for (int t = 0; t < T; ++t) {
      b.advantages[b.index(e, t)] = g.advantages[t];
      b.returns[b.index(e, t)] = g.returns[t];
    }
  }
  normalize_advantages(b.advantages);
  return ppo_update(b, policy_, value_, policy_adam_, value_adam_, config_, rng_);
}

UpdateMetrics Trainer::train_step() {
  const auto t0 = std::chrono::steady_clock::now();
  pending_fails_ = pending_episodes_ = 0;
  RolloutBuffer b = collect();
  UpdateMetrics m;
  m.stats = update(b);
  policy_norm_ = next_policy_norm_;
  critic_norm_ = next_critic_norm_;
  ++update_;
  m.update = update_;
  std::vector<double> sums(RewardBreakdown::names().size(), 0.0);
  for (const auto& r : b.breakdown) {
    const auto v = r.values();
    for (std::size_t k = 0; k < v.size(); ++k) sums[k] += v[k];
  }
  RewardBreakdown& mr = m.mean_reward;
  double* fields[] = {&mr.q, &mr.qdot, &mr.x, &mr.xdot, &mr.orientation, &mr.contact,
                      &mr.action_diff, &mr.action_min, &mr.fail, &mr.total};
  for (std::size_t k = 0; k < sums.size(); ++k) *fields[k] = sums[k] / b.size();
  m.episodes = pending_episodes_;
  m.fail_rate = pending_episodes_ > 0 ? static_cast<double>(pending_fails_) / pending_episodes_ : 0.0;
  m.diverged = b.diverged;
  if (!recent_lengths_.empty())
    m.episode_length = std::accumulate(recent_lengths_.begin(), recent_lengths_.end(), 0.0) / recent_lengths_.size();
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

void Trainer::train(const std::string& out_dir, bool verbose) {
  std::ofstream csv;
  auto checkpoint = [&]() {
    if (out_dir.empty()) return;
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_%06d.bin", update_);
    save((std::filesystem::path(out_dir) / name).string());
    save((std::filesystem::path(out_dir) / "latest.bin").string());
  };
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto path = std::filesystem::path(out_dir) / "metrics.csv";
    const bool fresh = update_ == 0 || !std::filesystem::exists(path);
    csv.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (fresh) csv << UpdateMetrics::csv_header() << '\n';
    if (update_ == 0) checkpoint();
  }
  while (update_ < config_.updates) {
    const UpdateMetrics m = train_step();
    if (csv.is_open()) csv << m.csv_row() << std::endl;
    if (verbose)
      std::cout << "update " << m.update << "  reward " << m.mean_reward.total << "  episode " << m.episode_length
                << "  fail " << m.fail_rate << "  vloss " << m.stats.value_loss << "  " << m.wall_seconds << " s"
                << std::endl;
    if (config_.checkpoint_every > 0 && update_ % config_.checkpoint_every == 0 && update_ < config_.updates)
      checkpoint();
  }
  checkpoint();
}

void Trainer::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  write_string(os, kMagic);
  write_i64(os, kVersion);
  write_string(os, to_yaml(config_));
  write_string(os, spec().source_text);
  policy_.mean.write(os);
  write_f64(os, policy_.sigma);
  policy_norm_.write(os);
  write_i64(os, update_);
  // training state
  value_.write(os);
  critic_norm_.write(os);
  policy_adam_.write(os);
  value_adam_.write(os);
  std::ostringstream state;
  state.precision(17);
  state << rng_ << '\n' << recent_lengths_.size();
  for (int l : recent_lengths_) state << ' ' << l;
  state << '\n';
  for (const auto& env : envs_) env.write(state);
  write_string(os, state.str());
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

namespace {

struct Header {
  TrainConfig config;
  std::string spec_text;
};

Header read_header(std::istream& is, const std::string& path) {
  std::string magic;
  try {
    magic = read_string(is);
  } catch (const std::exception&) {
    throw std::runtime_error(path + " is not a checkpoint");
  }
  if (magic != kMagic) throw std::runtime_error(path + " is not a checkpoint");
  const std::int64_t version = read_i64(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Header h;
  h.config = parse_train_config(read_string(is));
  h.spec_text = read_string(is);
  return h;
}

}  // namespace

void Trainer::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  read_header(is, path);
  Mlp pm = Mlp::read(is);
  const double sigma = read_f64(is);
  RunningNorm pn = RunningNorm::read(is);
  const int upd = static_cast<int>(read_i64(is));
  Mlp vm = Mlp::read(is);
  RunningNorm cn = RunningNorm::read(is);
  Adam pa = Adam::read(is);
  Adam va = Adam::read(is);
  if (pm.sizes() != policy_.mean.sizes() || vm.sizes() != value_.sizes())
    throw std::runtime_error("checkpoint networks do not match this character and config");
  std::istringstream state(read_string(is));
  state >> rng_;
  std::size_t nl = 0;
  state >> nl;
  recent_lengths_.clear();
  for (std::size_t k = 0; k < nl; ++k) {
    int l = 0;
    state >> l;
    recent_lengths_.push_back(l);
  }
  for (auto& env : envs_) env.read(state);
  if (!state) throw std::runtime_error("checkpoint environment state does not match num_envs");
  policy_.mean = std::move(pm);
  policy_.sigma = sigma;
  policy_norm_ = std::move(pn);
  critic_norm_ = std::move(cn);
  value_ = std::move(vm);
  policy_adam_ = std::move(pa);
  value_adam_ = std::move(va);
  update_ = upd;
}

PolicySnapshot load_policy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  const Header h = read_header(is, path);
  PolicySnapshot s;
  s.config = h.config;
  s.spec = apply_tail_mode(parse_character(h.spec_text), h.config.tail_mode);
  s.policy.mean = Mlp::read(is);
  s.policy.sigma = read_f64(is);
  s.norm = RunningNorm::read(is);
  s.updates = static_cast<int>(read_i64(is));
  return s;
}

PolicySnapshot snapshot(const Trainer& t) {
  PolicySnapshot s;
  s.config = t.config();
  s.spec = t.spec();
  s.policy = t.policy();
  s.norm = t.policy_norm();
  s.updates = t.updates_done();
  return s;
}

}  // namespace retarget
