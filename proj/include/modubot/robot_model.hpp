#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace modubot {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config errors. Every error names the JSON path it refers to so callers can
// point users at the offending field.
// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// malformed JSON text (position comes from the underlying parser)
class ConfigSyntaxError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// missing field, wrong type, unknown field
class ConfigSchemaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// well-formed but meaningless values (limit_lo >= limit_hi, ...)
class ConfigSemanticError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// ---------------------------------------------------------------------------
// Robot description
// ---------------------------------------------------------------------------

enum class JointKind { revolute_z, prismatic_z };

inline const char* to_string(JointKind k) {
  return k == JointKind::revolute_z ? "revolute_z" : "prismatic_z";
}

// One chain module: a joint (rotation about local z, or translation along z)
// followed by a rigid link of `link_length` along local x and `link_rise`
// along z.
struct JointSpec {
  JointKind kind = JointKind::revolute_z;
  double link_length = 0.0;  // m
  double link_rise = 0.0;    // m
  double limit_lo = 0.0;     // rad or m
  double limit_hi = 0.0;
  double max_velocity = 0.0;  // rad/s or m/s
};

struct RobotConfig {
  std::string name;
  Eigen::Vector3d base_position = Eigen::Vector3d::Zero();
  double base_rise = 0.0;
  std::vector<JointSpec> joints;

  int dof() const { return static_cast<int>(joints.size()); }
};

struct Pose3 {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

// ---------------------------------------------------------------------------
// Parsing / serialization
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_fields(const json& obj, const std::string& path,
                                  std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigSchemaError(path + "." + key, "unknown field");
  }
}

inline const json& require_field(const json& obj, const std::string& path,
                                 const char* name) {
  auto it = obj.find(name);
  if (it == obj.end())
    throw ConfigSchemaError(path + "." + name, "missing field");
  return *it;
}

inline double require_number(const json& obj, const std::string& path,
                             const char* name) {
  const json& v = require_field(obj, path, name);
  if (!v.is_number())
    throw ConfigSchemaError(path + "." + name, "expected a number");
  return v.get<double>();
}

inline std::string require_string(const json& obj, const std::string& path,
                                  const char* name) {
  const json& v = require_field(obj, path, name);
  if (!v.is_string())
    throw ConfigSchemaError(path + "." + name, "expected a string");
  return v.get<std::string>();
}

inline Eigen::Vector3d require_vec3(const json& obj, const std::string& path,
                                    const char* name) {
  const json& v = require_field(obj, path, name);
  if (!v.is_array() || v.size() != 3)
    throw ConfigSchemaError(path + "." + name, "expected [x, y, z]");
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number())
      throw ConfigSchemaError(path + "." + name, "expected [x, y, z]");
    out[i] = v[i].get<double>();
  }
  return out;
}

}  // namespace detail

inline JointSpec joint_spec_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigSchemaError(path, "expected an object");
  detail::reject_unknown_fields(j, path,
                                {"kind", "link_length", "link_rise",
                                 "limit_lo", "limit_hi", "max_velocity"});
  JointSpec spec;
  const std::string kind = detail::require_string(j, path, "kind");
  if (kind == "revolute_z") {
    spec.kind = JointKind::revolute_z;
  } else if (kind == "prismatic_z") {
    spec.kind = JointKind::prismatic_z;
  } else {
    throw ConfigSchemaError(path + ".kind",
                            "expected \"revolute_z\" or \"prismatic_z\"");
  }
  spec.link_length = detail::require_number(j, path, "link_length");
  spec.link_rise = detail::require_number(j, path, "link_rise");
  spec.limit_lo = detail::require_number(j, path, "limit_lo");
  spec.limit_hi = detail::require_number(j, path, "limit_hi");
  spec.max_velocity = detail::require_number(j, path, "max_velocity");

  if (spec.link_length < 0.0)
    throw ConfigSemanticError(path + ".link_length", "must be >= 0");
  if (!(spec.limit_lo < spec.limit_hi))
    throw ConfigSemanticError(path + ".limit_hi",
                              "limit_lo must be strictly below limit_hi");
  if (!(spec.max_velocity > 0.0))
    throw ConfigSemanticError(path + ".max_velocity", "must be > 0");
  return spec;
}

inline RobotConfig robot_config_from_json(const json& j,
                                          const std::string& path = "robot") {
  if (!j.is_object()) throw ConfigSchemaError(path, "expected an object");
  detail::reject_unknown_fields(j, path,
                                {"name", "base_position", "base_rise",
                                 "joints"});
  RobotConfig cfg;
  cfg.name = detail::require_string(j, path, "name");
  cfg.base_position = detail::require_vec3(j, path, "base_position");
  cfg.base_rise = detail::require_number(j, path, "base_rise");

  const json& joints = detail::require_field(j, path, "joints");
  if (!joints.is_array() || joints.empty())
    throw ConfigSchemaError(path + ".joints", "expected a non-empty array");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    cfg.joints.push_back(joint_spec_from_json(
        joints[i], path + ".joints[" + std::to_string(i) + "]"));
  }
  return cfg;
}

inline RobotConfig parse_robot_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigSyntaxError("", e.what());
  }
  return robot_config_from_json(j);
}

inline json robot_config_to_json(const RobotConfig& cfg) {
  json joints = json::array();
  for (const JointSpec& s : cfg.joints) {
    joints.push_back({{"kind", to_string(s.kind)},
                      {"link_length", s.link_length},
                      {"link_rise", s.link_rise},
                      {"limit_lo", s.limit_lo},
                      {"limit_hi", s.limit_hi},
                      {"max_velocity", s.max_velocity}});
  }
  return json{{"name", cfg.name},
              {"base_position",
               {cfg.base_position.x(), cfg.base_position.y(),
                cfg.base_position.z()}},
              {"base_rise", cfg.base_rise},
              {"joints", joints}};
}

// ---------------------------------------------------------------------------
// Kinematics
// ---------------------------------------------------------------------------

namespace detail {

inline void check_joint_vector(const RobotConfig& cfg,
                               const Eigen::VectorXd& q) {
  if (q.size() != cfg.dof())
    throw std::invalid_argument(
        "joint vector has length " + std::to_string(q.size()) +
        ", robot \"" + cfg.name + "\" has " + std::to_string(cfg.dof()) +
        " joints");
  for (int i = 0; i < cfg.dof(); ++i) {
    const JointSpec& s = cfg.joints[static_cast<std::size_t>(i)];
    if (q[i] < s.limit_lo || q[i] > s.limit_hi)
      throw std::invalid_argument("joint " + std::to_string(i) + " value " +
                                  std::to_string(q[i]) + " outside limits [" +
                                  std::to_string(s.limit_lo) + ", " +
                                  std::to_string(s.limit_hi) + "]");
  }
}

}  // namespace detail

// End-effector position for joint values q. Every joint axis is the world z
// axis (SCARA property), so orientation reduces to one accumulated yaw and
// the chain can be evaluated by rotating each link offset into place.
inline Pose3 forward_kinematics(const RobotConfig& cfg,
                                const Eigen::VectorXd& q) {
  detail::check_joint_vector(cfg, q);
  Eigen::Vector3d p = cfg.base_position + Eigen::Vector3d(0, 0, cfg.base_rise);
  double yaw = 0.0;
  for (int i = 0; i < cfg.dof(); ++i) {
    const JointSpec& s = cfg.joints[static_cast<std::size_t>(i)];
    double rise = s.link_rise;
    if (s.kind == JointKind::revolute_z) {
      yaw += q[i];
    } else {
      rise += q[i];
    }
    p += Eigen::Vector3d(s.link_length * std::cos(yaw),
                         s.link_length * std::sin(yaw), rise);
  }
  return Pose3{p};
}

// 3 x n position Jacobian. Column i is z x (p - o_i) for revolute joints
// (o_i = the joint's rotation center) and the z axis for prismatic joints.
inline Eigen::Matrix3Xd jacobian(const RobotConfig& cfg,
                                 const Eigen::VectorXd& q) {
  detail::check_joint_vector(cfg, q);
  const int n = cfg.dof();

  // joint origins: position of the chain before each joint's link offset
  std::vector<Eigen::Vector3d> origins(static_cast<std::size_t>(n));
  Eigen::Vector3d p = cfg.base_position + Eigen::Vector3d(0, 0, cfg.base_rise);
  double yaw = 0.0;
  for (int i = 0; i < n; ++i) {
    const JointSpec& s = cfg.joints[static_cast<std::size_t>(i)];
    origins[static_cast<std::size_t>(i)] = p;
    double rise = s.link_rise;
    if (s.kind == JointKind::revolute_z) {
      yaw += q[i];
    } else {
      rise += q[i];
    }
    p += Eigen::Vector3d(s.link_length * std::cos(yaw),
                         s.link_length * std::sin(yaw), rise);
  }

  Eigen::Matrix3Xd jac(3, n);
  for (int i = 0; i < n; ++i) {
    const JointSpec& s = cfg.joints[static_cast<std::size_t>(i)];
    if (s.kind == JointKind::revolute_z) {
      const Eigen::Vector3d r = p - origins[static_cast<std::size_t>(i)];
      jac.col(i) = Eigen::Vector3d(-r.y(), r.x(), 0.0);
    } else {
      jac.col(i) = Eigen::Vector3d(0.0, 0.0, 1.0);
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline constexpr double kDefaultJointVelocity = 4.0;  // rad/s

inline JointSpec revolute_module(double link_length, double link_rise = 0.0) {
  JointSpec s;
  s.kind = JointKind::revolute_z;
  s.link_length = link_length;
  s.link_rise = link_rise;
  s.limit_lo = -M_PI;
  s.limit_hi = M_PI;
  s.max_velocity = kDefaultJointVelocity;
  return s;
}

// 3-module arm, home pose (0.75, 0, 0.3746)
inline RobotConfig scara_3dof() {
  RobotConfig cfg;
  cfg.name = "scara_3dof";
  cfg.base_rise = 0.3746;
  cfg.joints = {revolute_module(0.35), revolute_module(0.30),
                revolute_module(0.10)};
  return cfg;
}

// 3-module arm plus a distal fourth module whose rise lifts the home pose
// from z = 0.3746 to z = 0.4868
inline RobotConfig scara_4dof() {
  RobotConfig cfg;
  cfg.name = "scara_4dof";
  cfg.base_rise = 0.3746;
  cfg.joints = {revolute_module(0.35), revolute_module(0.30),
                revolute_module(0.10), revolute_module(0.10, 0.1122)};
  return cfg;
}

inline bool is_preset_name(const std::string& name) {
  return name == "scara_3dof" || name == "scara_4dof";
}

inline RobotConfig preset_robot(const std::string& name) {
  if (name == "scara_3dof") return scara_3dof();
  if (name == "scara_4dof") return scara_4dof();
  throw ConfigSemanticError("robot", "unknown preset \"" + name + "\"");
}

}  // namespace modubot
