#pragma once

#include "posedyn/character.hpp"
#include "posedyn/skeleton.hpp"

namespace posedyn {

/// Penalty ground-contact parameters. Contact points are the per-bone hull
/// vertices of the character.
struct ContactParams {
  double ground_height = 0.0;  // meters, world z
  double kn = 2.0e4;           // normal stiffness, N/m per contact point
  double dn = 300.0;           // normal damping, N*s/m
  double kt = 300.0;           // tangential damping, N*s/m
  double mu = 0.9;             // Coulomb friction coefficient
  bool enabled = true;
};

struct SceneConfig {
  Eigen::Vector3d gravity = Eigen::Vector3d(0.0, 0.0, -9.81);
  ContactParams contact;
  bool fix_root = false;          // weld the root; used by arm-like tasks
  double residual_force_scale = 500.0;
  double lambda_max = 10.0;
  int substeps = 15;              // simulation steps per policy step
  double substep_dt = 1.0 / 450.0;

  double policy_dt() const { return substeps * substep_dt; }
};

/// Single-character simulation state.
struct SimState {
  Pose pose;
  Velocities velocities;
  double time = 0.0;
  int substep_index = 0;  // within the current policy step

  static SimState rest(const CharacterModel& character, const Pose& pose);
};

/// One policy-rate action: PD targets, root residual wrench, and per-substep
/// PD gain scales.
struct Action {
  Eigen::VectorXd u;                       // PD target angles, per non-root dof
  Vector6d eta = Vector6d::Zero();         // root residual force (N) + torque (N*m)
  Eigen::VectorXd lambda_p, lambda_d;      // m positive scales each

  void validate(const CharacterModel& character, const SceneConfig& scene) const;
};

/// tau = kp o (u - q_nr) - kd o qdot_nr, clamped to per-dof torque limits.
Eigen::VectorXd pd_torques(const Eigen::VectorXd& kp, const Eigen::VectorXd& kd,
                           const Eigen::VectorXd& u, const Eigen::VectorXd& q_nr,
                           const Eigen::VectorXd& qd_nr, const Eigen::VectorXd& torque_limit);

/// Element-wise scaled gains for one substep.
std::pair<Eigen::VectorXd, Eigen::VectorXd> meta_pd_gains(const Eigen::VectorXd& kp_base,
                                                          const Eigen::VectorXd& kd_base,
                                                          double lambda_p, double lambda_d);

/// One dynamics step of h seconds: mass matrix by composite-rigid-body
/// accumulation, bias by recursive Newton-Euler, actuation tau on non-root
/// dofs, eta as an external root wrench (already scaled), penalty ground
/// contact at hull vertices. Throws SimulationDivergedError when any state
/// component becomes non-finite.
SimState substep(const CharacterModel& character, const SceneConfig& scene, const SimState& state,
                 const Eigen::VectorXd& tau, const Vector6d& eta, double h);

/// Executes scene.substeps substeps; gains are rescaled per substep from the
/// action's lambda sequences and torques recomputed from the instantaneous
/// joint state; eta is scaled once and held constant.
SimState policy_step(const CharacterModel& character, const SceneConfig& scene,
                     const SimState& state, const Action& action);

/// True iff the character's root height dropped more than 0.5 m below the
/// kinematic reference root (strict).
bool detect_fall(const SimState& state, const Pose& kinematic_pose);

/// Sum of m_i * v_com_i over the bodies; used by conservation checks.
Eigen::Vector3d total_linear_momentum(const CharacterModel& character, const SimState& state);

/// World positions of a bone's hull vertices at the given pose.
std::vector<Eigen::Vector3d> world_hull_vertices(const CharacterModel& character,
                                                 const FkResult& fk, int bone);

}  // namespace posedyn
