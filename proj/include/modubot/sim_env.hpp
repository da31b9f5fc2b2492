#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "modubot/rng.hpp"
#include "modubot/robot_model.hpp"

namespace modubot {

// ---------------------------------------------------------------------------
// Episodic reacher environment: joint-state observations, per-step trajectory
// execution over a fixed simulated duration, RMSE-based reward in [-1, 1],
// reset on success or timeout.
// ---------------------------------------------------------------------------

struct EnvConfig {
  RobotConfig robot;
  Eigen::Vector3d goal = Eigen::Vector3d::Zero();  // m, in the base frame
  double success_rmse = 0.005;                     // m
  int max_episode_steps = 1000;
  double exec_time = 0.01;   // simulated seconds per action
  double substep_dt = 0.001; // integration grid
  double action_scale = 0.1; // rad (or m) of commanded motion per unit action
  double reward_distance_scale = 1.0;  // m; RMSE at which reward saturates at -1
};

struct EnvState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  int steps_taken = 0;
};

struct Observation {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
  Eigen::Vector3d ee_position;
  Eigen::Vector3d ee_minus_goal;

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(q.size() * 2 + 6);
    out << q, qdot, ee_position, ee_minus_goal;
    return out;
  }
};

struct StepInfo {
  double rmse = 0.0;       // m
  double euclid_mm = 0.0;  // = rmse * sqrt(3) * 1000
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// ---------------------------------------------------------------------------
// Reward pieces
// ---------------------------------------------------------------------------

// Per-coordinate root mean square error; equals Euclidean distance / sqrt(3).
inline double rmse(const Eigen::Vector3d& p, const Eigen::Vector3d& g) {
  return (p - g).norm() / std::sqrt(3.0);
}

// Piecewise linear in the RMSE: (0, 1] on success, [-1, 0) otherwise.
inline double compute_reward(double rmse_value, const EnvConfig& cfg) {
  if (rmse_value < cfg.success_rmse)
    return 1.0 - rmse_value / cfg.success_rmse;
  return -std::min(rmse_value / cfg.reward_distance_scale, 1.0);
}

// ---------------------------------------------------------------------------
// Trajectory execution: rate-limited first-order tracking of a clamped joint
// command, integrated on the substep grid.
// ---------------------------------------------------------------------------

inline EnvState execute_trajectory(const EnvState& state,
                                   const Eigen::VectorXd& q_cmd,
                                   const EnvConfig& cfg) {
  const int n = cfg.robot.dof();
  if (q_cmd.size() != n)
    throw std::invalid_argument("command has length " +
                                std::to_string(q_cmd.size()) + ", expected " +
                                std::to_string(n));

  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    const JointSpec& s = cfg.robot.joints[static_cast<std::size_t>(i)];
    target[i] = std::clamp(q_cmd[i], s.limit_lo, s.limit_hi);
  }

  const int substeps =
      std::max(1, static_cast<int>(std::llround(cfg.exec_time / cfg.substep_dt)));

  EnvState out = state;
  for (int k = 0; k < substeps; ++k) {
    for (int i = 0; i < n; ++i) {
      const JointSpec& s = cfg.robot.joints[static_cast<std::size_t>(i)];
      const double travel = s.max_velocity * cfg.substep_dt;
      const double delta = target[i] - out.q[i];
      out.q[i] += std::clamp(delta, -travel, travel);
    }
  }
  out.qdot = (out.q - state.q) / cfg.exec_time;
  return out;
}

// ---------------------------------------------------------------------------
// Goal reachability: coarse random sampling refined by damped Gauss-Newton
// steps on the position error. Returns a reaching pose if one exists.
// ---------------------------------------------------------------------------

inline std::optional<Eigen::VectorXd> find_reaching_pose(
    const RobotConfig& robot, const Eigen::Vector3d& goal, double rmse_tol) {
  const int n = robot.dof();
  Rng rng(0x5eed);

  auto sample = [&] {
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) {
      const JointSpec& s = robot.joints[static_cast<std::size_t>(i)];
      q[i] = rng.uniform(s.limit_lo, s.limit_hi);
    }
    return q;
  };
  auto score = [&](const Eigen::VectorXd& q) {
    return rmse(forward_kinematics(robot, q).position, goal);
  };

  constexpr int kSamples = 1024;
  constexpr int kStarts = 8;
  constexpr int kIters = 100;

  std::vector<std::pair<double, Eigen::VectorXd>> pool;
  pool.reserve(kSamples + 1);
  pool.emplace_back(score(Eigen::VectorXd::Zero(n)), Eigen::VectorXd::Zero(n));
  for (int k = 0; k < kSamples; ++k) {
    Eigen::VectorXd q = sample();
    pool.emplace_back(score(q), q);
  }
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  for (int s = 0; s < kStarts; ++s) {
    Eigen::VectorXd q = pool[static_cast<std::size_t>(s)].second;
    for (int it = 0; it < kIters; ++it) {
      const Eigen::Vector3d p = forward_kinematics(robot, q).position;
      if (rmse(p, goal) < rmse_tol) return q;
      const Eigen::Matrix3Xd jac = jacobian(robot, q);
      const Eigen::MatrixXd h =
          jac.transpose() * jac +
          1e-9 * Eigen::MatrixXd::Identity(n, n);
      const Eigen::VectorXd dq = h.ldlt().solve(jac.transpose() * (goal - p));
      q += dq;
      for (int i = 0; i < n; ++i) {
        const JointSpec& js = robot.joints[static_cast<std::size_t>(i)];
        q[i] = std::clamp(q[i], js.limit_lo, js.limit_hi);
      }
    }
    if (score(q) < rmse_tol) return q;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

class ReacherEnv {
 public:
  explicit ReacherEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
    if (!(cfg_.success_rmse > 0.0))
      throw ConfigSemanticError("success_rmse", "must be > 0");
    if (!(cfg_.exec_time > 0.0))
      throw ConfigSemanticError("exec_time", "must be > 0");
    if (!(cfg_.substep_dt > 0.0))
      throw ConfigSemanticError("substep_dt", "must be > 0");
    if (cfg_.exec_time < cfg_.substep_dt)
      throw ConfigSemanticError("exec_time", "must be >= substep_dt");
    if (cfg_.max_episode_steps < 1)
      throw ConfigSemanticError("max_episode_steps", "must be >= 1");
    if (!(cfg_.action_scale > 0.0))
      throw ConfigSemanticError("action_scale", "must be > 0");
    if (!(cfg_.reward_distance_scale > 0.0))
      throw ConfigSemanticError("reward_distance_scale", "must be > 0");
    if (!find_reaching_pose(cfg_.robot, cfg_.goal, cfg_.success_rmse))
      throw ConfigSemanticError(
          "goal", "no joint configuration reaches the goal within "
                  "success_rmse for robot \"" + cfg_.robot.name + "\"");
    reset();
  }

  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  bool done() const { return done_; }

  int observation_size() const { return cfg_.robot.dof() * 2 + 6; }
  int action_size() const { return cfg_.robot.dof(); }

  Observation reset() {
    const int n = cfg_.robot.dof();
    state_.q = Eigen::VectorXd::Zero(n);
    state_.qdot = Eigen::VectorXd::Zero(n);
    state_.steps_taken = 0;
    done_ = false;
    return observation();
  }

  Observation observation() const {
    const Eigen::Vector3d ee =
        forward_kinematics(cfg_.robot, state_.q).position;
    return Observation{state_.q, state_.qdot, ee, ee - cfg_.goal};
  }

  // One control step: command a relative joint motion of
  // action * action_scale (action clamped to [-1, 1] per component),
  // execute it for exec_time, then score the resulting pose.
  StepResult step(const Eigen::VectorXd& action) {
    if (done_)
      throw std::logic_error(
          "step() called on a finished episode; call reset() first");
    const int n = cfg_.robot.dof();
    if (action.size() != n)
      throw std::invalid_argument("action has length " +
                                  std::to_string(action.size()) +
                                  ", expected " + std::to_string(n));

    Eigen::VectorXd q_cmd(n);
    for (int i = 0; i < n; ++i)
      q_cmd[i] = state_.q[i] + cfg_.action_scale *
                 std::clamp(action[i], -1.0, 1.0);

    EnvState next = execute_trajectory(state_, q_cmd, cfg_);
    next.steps_taken = state_.steps_taken + 1;
    state_ = next;

    StepResult result;
    result.observation = observation();
    result.info.rmse = rmse(result.observation.ee_position, cfg_.goal);
    result.info.euclid_mm = result.info.rmse * std::sqrt(3.0) * 1000.0;
    result.reward = compute_reward(result.info.rmse, cfg_);

    const bool success = result.info.rmse < cfg_.success_rmse;
    const bool timeout = state_.steps_taken >= cfg_.max_episode_steps;
    done_ = success || timeout;
    result.done = done_;
    return result;
  }

 private:
  EnvConfig cfg_;
  EnvState state_;
  bool done_ = false;
};

// ---------------------------------------------------------------------------
// Config parsing. "robot" is either an inline robot object or a path to a
// robot JSON file (resolved against base_dir).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline EnvConfig env_config_from_json(const json& j,
                                      const std::string& base_dir = ".") {
  if (!j.is_object()) throw ConfigSchemaError("env", "expected an object");
  detail::reject_unknown_fields(
      j, "env",
      {"robot", "goal", "success_rmse", "max_episode_steps", "exec_time",
       "substep_dt", "action_scale", "reward_distance_scale"});

  EnvConfig cfg;
  const json& robot = detail::require_field(j, "env", "robot");
  if (robot.is_string()) {
    const std::string ref = robot.get<std::string>();
    if (is_preset_name(ref)) {
      cfg.robot = preset_robot(ref);
    } else {
      const std::string path =
          (!ref.empty() && ref.front() == '/') ? ref : base_dir + "/" + ref;
      cfg.robot = parse_robot_config(detail::read_text_file(path));
    }
  } else {
    cfg.robot = robot_config_from_json(robot, "env.robot");
  }

  cfg.goal = detail::require_vec3(j, "env", "goal");
  cfg.exec_time = detail::require_number(j, "env", "exec_time");
  if (j.contains("success_rmse"))
    cfg.success_rmse = detail::require_number(j, "env", "success_rmse");
  if (j.contains("max_episode_steps"))
    cfg.max_episode_steps = static_cast<int>(
        detail::require_number(j, "env", "max_episode_steps"));
  if (j.contains("substep_dt"))
    cfg.substep_dt = detail::require_number(j, "env", "substep_dt");
  if (j.contains("action_scale"))
    cfg.action_scale = detail::require_number(j, "env", "action_scale");
  if (j.contains("reward_distance_scale"))
    cfg.reward_distance_scale =
        detail::require_number(j, "env", "reward_distance_scale");
  return cfg;
}

inline json env_config_to_json(const EnvConfig& cfg) {
  return json{{"robot", robot_config_to_json(cfg.robot)},
              {"goal", {cfg.goal.x(), cfg.goal.y(), cfg.goal.z()}},
              {"success_rmse", cfg.success_rmse},
              {"max_episode_steps", cfg.max_episode_steps},
              {"exec_time", cfg.exec_time},
              {"substep_dt", cfg.substep_dt},
              {"action_scale", cfg.action_scale},
              {"reward_distance_scale", cfg.reward_distance_scale}};
}

// Default reach targets for the preset arms (at home-pose height).
inline Eigen::Vector3d goal_3dof() {
  return {0.3305805, -0.1326121, 0.3746};
}
inline Eigen::Vector3d goal_4dof() {
  return {0.3305805, -0.1326121, 0.4868};
}

inline EnvConfig preset_env(const std::string& robot_name,
                            double exec_time = 0.01) {
  EnvConfig cfg;
  cfg.robot = preset_robot(robot_name);
  cfg.goal = robot_name == "scara_4dof" ? goal_4dof() : goal_3dof();
  cfg.exec_time = exec_time;
  return cfg;
}

}  // namespace modubot
