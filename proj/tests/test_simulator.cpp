#include <cmath>

#include "doctest.h"
#include "posedyn/simulator.hpp"
#include "test_helpers.hpp"

using namespace posedyn;

namespace {

SkinnedMesh box_mesh_for(const Skeleton& skeleton, const std::vector<Eigen::Vector3d>& centers,
                         const std::vector<Eigen::Vector3d>& half_extents) {
  SkinnedMesh mesh;
  const int nb = skeleton.joint_count();
  mesh.vertices.resize(8 * nb, 3);
  mesh.weights = Eigen::MatrixXd::Zero(8 * nb, nb);
  for (int b = 0; b < nb; ++b) {
    for (int i = 0; i < 8; ++i) {
      const Eigen::Vector3d corner(i & 1 ? half_extents[b].x() : -half_extents[b].x(),
                                   i & 2 ? half_extents[b].y() : -half_extents[b].y(),
                                   i & 4 ? half_extents[b].z() : -half_extents[b].z());
      mesh.vertices.row(8 * b + i) = (centers[b] + corner).transpose();
      mesh.weights(8 * b + i, b) = 1.0;
    }
  }
  return mesh;
}

/// Free cube: a root-only character.
CharacterModel make_free_cube(double side = 0.2) {
  Skeleton s;
  Joint root;
  root.name = "root";
  root.kind = JointKind::FreeRoot;
  s.joints.push_back(root);
  const SkinnedMesh mesh =
      box_mesh_for(s, {Eigen::Vector3d::Zero()}, {Eigen::Vector3d::Constant(side / 2)});
  return build_character(mesh, s, 1000.0, GainConfig{});
}

/// Rod pendulum: fixed root block plus one hinge (y axis) at the root anchor
/// swinging a 1 m rod that hangs along -z at zero angle.
CharacterModel make_pendulum() {
  Skeleton s;
  Joint root;
  root.name = "root";
  root.kind = JointKind::FreeRoot;
  s.joints.push_back(root);
  Joint rod;
  rod.name = "rod";
  rod.parent = 0;
  rod.kind = JointKind::Hinge;
  rod.axis = Eigen::Vector3d::UnitY();
  rod.offset = Eigen::Vector3d::Zero();
  rod.lower_limit = Eigen::VectorXd::Constant(1, -M_PI);
  rod.upper_limit = Eigen::VectorXd::Constant(1, M_PI);
  s.joints.push_back(rod);
  const SkinnedMesh mesh = box_mesh_for(
      s, {Eigen::Vector3d(0.1, 0, 0.1), Eigen::Vector3d(0, 0, -0.5)},
      {Eigen::Vector3d(0.03, 0.03, 0.03), Eigen::Vector3d(0.025, 0.025, 0.5)});
  return build_character(mesh, s, 1000.0, GainConfig{});
}

CharacterModel make_two_link() {
  const Skeleton s = test::make_chain(2, 0.3, Eigen::Vector3d::UnitY());
  std::vector<Eigen::Vector3d> centers = {{0, 0, 0}, {0.15, 0, 0}, {0.15, 0, 0}};
  std::vector<Eigen::Vector3d> halves = {
      {0.05, 0.05, 0.05}, {0.15, 0.03, 0.03}, {0.15, 0.03, 0.03}};
  return build_character(box_mesh_for(s, centers, halves), s, 1000.0, GainConfig{});
}

SceneConfig space_scene() {
  SceneConfig scene;
  scene.gravity.setZero();
  scene.contact.enabled = false;
  return scene;
}

Pose default_pose(const CharacterModel& c, double z = 0.0) {
  Pose p;
  p.root_translation = Eigen::Vector3d(0, 0, z);
  p.joint_angles = Eigen::VectorXd::Zero(c.skeleton.non_root_dof());
  return p;
}

Action unit_lambda_action(const CharacterModel& c, const SceneConfig& scene) {
  Action a;
  a.u = Eigen::VectorXd::Zero(c.skeleton.non_root_dof());
  a.lambda_p = Eigen::VectorXd::Ones(scene.substeps);
  a.lambda_d = Eigen::VectorXd::Ones(scene.substeps);
  return a;
}

}  // namespace

TEST_CASE("pd_torques") {
  const Eigen::VectorXd limit = Eigen::VectorXd::Constant(1, 200.0);

  SUBCASE("zero at the target with zero velocity") {
    Eigen::VectorXd kp = Eigen::VectorXd::Constant(1, 10.0);
    Eigen::VectorXd kd = Eigen::VectorXd::Constant(1, 1.0);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.7);
    CHECK(pd_torques(kp, kd, u, u, Eigen::VectorXd::Zero(1), limit)(0) == doctest::Approx(0.0));
  }

  SUBCASE("hand-computed torque without velocity") {
    Eigen::VectorXd kp = Eigen::VectorXd::Constant(1, 10.0);
    Eigen::VectorXd kd = Eigen::VectorXd::Constant(1, 1.0);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.5);
    const Eigen::VectorXd tau =
        pd_torques(kp, kd, u, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), limit);
    CHECK(tau(0) == doctest::Approx(5.0));
  }

  SUBCASE("velocity damping subtracts") {
    Eigen::VectorXd kp = Eigen::VectorXd::Constant(1, 10.0);
    Eigen::VectorXd kd = Eigen::VectorXd::Constant(1, 1.0);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.5);
    Eigen::VectorXd qd = Eigen::VectorXd::Constant(1, 2.0);
    CHECK(pd_torques(kp, kd, u, Eigen::VectorXd::Zero(1), qd, limit)(0) == doctest::Approx(3.0));
  }

  SUBCASE("clamped to the torque limit") {
    Eigen::VectorXd kp = Eigen::VectorXd::Constant(1, 1e5);
    Eigen::VectorXd kd = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 1.0);
    CHECK(pd_torques(kp, kd, u, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), limit)(0) ==
          doctest::Approx(200.0));
  }

  SUBCASE("dimension mismatch rejected") {
    CHECK_THROWS_AS(pd_torques(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1),
                               Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                               Eigen::VectorXd::Zero(1), limit),
                    InvalidInputError);
  }
}

TEST_CASE("meta_pd_gains") {
  const Eigen::VectorXd kp = Eigen::VectorXd::Constant(2, 10.0);
  const Eigen::VectorXd kd = Eigen::VectorXd::Constant(2, 1.0);

  SUBCASE("unit scales reproduce the base gains") {
    const auto [p, d] = meta_pd_gains(kp, kd, 1.0, 1.0);
    CHECK(p.isApprox(kp));
    CHECK(d.isApprox(kd));
  }

  SUBCASE("scale 2 doubles stiffness") {
    const auto [p, d] = meta_pd_gains(kp, kd, 2.0, 1.0);
    CHECK(p(0) == doctest::Approx(20.0));
    CHECK(d(0) == doctest::Approx(1.0));
  }

  SUBCASE("non-positive scales rejected") {
    CHECK_THROWS_AS(meta_pd_gains(kp, kd, 0.0, 1.0), InvalidInputError);
    CHECK_THROWS_AS(meta_pd_gains(kp, kd, 1.0, -2.0), InvalidInputError);
  }
}

TEST_CASE("substep static equilibrium") {
  const CharacterModel c = make_two_link();
  const SceneConfig scene = space_scene();
  const SimState s0 = SimState::rest(c, default_pose(c, 1.0));
  const SimState s1 =
      substep(c, scene, s0, Eigen::VectorXd::Zero(2), Vector6d::Zero(), 1.0 / 450.0);
  CHECK(s1.pose.root_translation == s0.pose.root_translation);
  CHECK(s1.pose.joint_angles == s0.pose.joint_angles);
  CHECK(s1.velocities.to_vector().norm() == 0.0);
  CHECK(s1.time == doctest::Approx(1.0 / 450.0));
}

TEST_CASE("free fall matches the ballistic trajectory") {
  const CharacterModel c = make_free_cube();
  SceneConfig scene;
  scene.contact.enabled = false;
  const double h = 1.0 / 450.0;
  const double z0 = 10.0;
  SimState s = SimState::rest(c, default_pose(c, z0));
  const Eigen::VectorXd tau(0);
  int k = 0;
  while (s.time < 0.5) {
    s = substep(c, scene, s, tau, Vector6d::Zero(), h);
    ++k;
    const double t = k * h;
    const double expect = z0 - 0.5 * 9.81 * t * t;
    CHECK(std::abs(s.pose.root_translation.z() - expect) < 1e-3);
  }
  CHECK(s.time >= 0.5);
}

TEST_CASE("pendulum small-angle period matches the linearized oracle") {
  const CharacterModel c = make_pendulum();
  SceneConfig scene;
  scene.contact.enabled = false;
  scene.fix_root = true;

  // Analytic period from the built bone properties.
  const double m = c.bones[1].mass;
  const Eigen::Vector3d com = c.bones[1].com;
  const double l = com.norm();
  const double i_pivot =
      c.bones[1].inertia(1, 1) + m * (com.x() * com.x() + com.z() * com.z());
  const double period = 2.0 * M_PI * std::sqrt(i_pivot / (m * 9.81 * l));

  SimState s = SimState::rest(c, default_pose(c, 1.5));
  s.pose.joint_angles(0) = 0.08;
  const Eigen::VectorXd tau = Eigen::VectorXd::Zero(1);
  const double h = 1.0 / 450.0;

  std::vector<double> upward_crossings;
  double prev_angle = s.pose.joint_angles(0);
  while (s.time < 5.5 * period) {
    s = substep(c, scene, s, tau, Vector6d::Zero(), h);
    const double angle = s.pose.joint_angles(0);
    if (prev_angle < 0.0 && angle >= 0.0) {
      const double frac = -prev_angle / (angle - prev_angle);
      upward_crossings.push_back(s.time - h + frac * h);
    }
    prev_angle = angle;
  }
  REQUIRE(upward_crossings.size() >= 5);
  const double measured = (upward_crossings.back() - upward_crossings.front()) /
                          (upward_crossings.size() - 1);
  CHECK(std::abs(measured - period) / period < 0.02);
}

TEST_CASE("policy step") {
  const CharacterModel c = make_two_link();
  SceneConfig scene;
  scene.contact.enabled = false;

  SUBCASE("advances exactly 15/450 seconds") {
    const SimState s0 = SimState::rest(c, default_pose(c, 1.0));
    const SimState s1 = policy_step(c, scene, s0, unit_lambda_action(c, scene));
    CHECK(s1.time == 15.0 / 450.0);
    CHECK(s1.substep_index == 0);
  }

  SUBCASE("unit scales reproduce the fixed-gain path bit for bit") {
    SimState s = SimState::rest(c, default_pose(c, 1.0));
    s.pose.joint_angles << 0.4, -0.2;
    Action a = unit_lambda_action(c, scene);
    a.u << -0.1, 0.3;
    const SimState via_policy = policy_step(c, scene, s, a);

    SimState manual = s;
    for (int j = 0; j < scene.substeps; ++j) {
      const Eigen::VectorXd tau =
          pd_torques(c.kp_base, c.kd_base, a.u, manual.pose.joint_angles,
                     manual.velocities.joint_rates, c.torque_limit);
      manual = substep(c, scene, manual, tau, Vector6d::Zero(), scene.substep_dt);
    }
    CHECK(via_policy.pose.root_translation == manual.pose.root_translation);
    CHECK(via_policy.pose.joint_angles == manual.pose.joint_angles);
    CHECK(via_policy.velocities.to_vector() == manual.velocities.to_vector());
  }

  SUBCASE("no forces leave velocities unchanged") {
    GainConfig g;
    g.kp_override = Eigen::VectorXd::Zero(2);
    g.kd_override = Eigen::VectorXd::Zero(2);
    const Skeleton s2 = c.skeleton;
    std::vector<Eigen::Vector3d> centers = {{0, 0, 0}, {0.15, 0, 0}, {0.15, 0, 0}};
    std::vector<Eigen::Vector3d> halves = {
        {0.05, 0.05, 0.05}, {0.15, 0.03, 0.03}, {0.15, 0.03, 0.03}};
    const CharacterModel zero_gain =
        build_character(box_mesh_for(s2, centers, halves), s2, 1000.0, g);
    const SceneConfig space = space_scene();
    const SimState s0 = SimState::rest(zero_gain, default_pose(zero_gain, 1.0));
    const SimState s1 = policy_step(zero_gain, space, s0, unit_lambda_action(zero_gain, space));
    CHECK(s1.velocities.to_vector().norm() == 0.0);
    CHECK(s1.pose.joint_angles == s0.pose.joint_angles);
  }

  SUBCASE("rejects wrong lambda length") {
    const SimState s0 = SimState::rest(c, default_pose(c, 1.0));
    Action a = unit_lambda_action(c, scene);
    a.lambda_p = Eigen::VectorXd::Ones(7);
    CHECK_THROWS_AS(policy_step(c, scene, s0, a), InvalidInputError);
  }

  SUBCASE("rejects lambda above the bound") {
    const SimState s0 = SimState::rest(c, default_pose(c, 1.0));
    Action a = unit_lambda_action(c, scene);
    a.lambda_p(3) = 11.0;
    CHECK_THROWS_AS(policy_step(c, scene, s0, a), InvalidInputError);
  }
}

TEST_CASE("detect_fall boundary") {
  const CharacterModel c = make_free_cube();
  Pose kin = default_pose(c, 1.0);
  SimState s = SimState::rest(c, default_pose(c, 1.0));
  CHECK_FALSE(detect_fall(s, kin));
  s.pose.root_translation.z() = 0.4;  // 0.6 below
  CHECK(detect_fall(s, kin));
  s.pose.root_translation.z() = 0.5;  // exactly 0.5 below: strict inequality
  CHECK_FALSE(detect_fall(s, kin));
}

TEST_CASE("internal torques never change total linear momentum") {
  const CharacterModel c = make_two_link();
  const double h = 1.0 / 450.0;
  SceneConfig scene;
  scene.contact.enabled = false;
  Rng rng(41);
  const double mgh = c.total_mass() * 9.81 * h;

  for (int trial = 0; trial < 30; ++trial) {
    SimState s = SimState::rest(c, default_pose(c, 1.0));
    s.pose.root_orientation = test::random_unit_quaternion(rng);
    s.pose.joint_angles << rng.normal(), rng.normal();
    Eigen::VectorXd tau(2);
    tau << rng.normal() * 50.0, rng.normal() * 50.0;

    // From rest: the velocity update carries exactly the gravity impulse.
    const SimState next = substep(c, scene, s, tau, Vector6d::Zero(), h);
    SimState hybrid = s;  // momentum measured at the pre-step configuration
    hybrid.velocities = next.velocities;
    const Eigen::Vector3d dp = total_linear_momentum(c, hybrid) - total_linear_momentum(c, s);
    CHECK(std::abs(dp.x()) / mgh < 1e-9);
    CHECK(std::abs(dp.y()) / mgh < 1e-9);
    CHECK(std::abs(dp.z() + mgh) / mgh < 1e-9);
  }
}

TEST_CASE("momentum impulse is torque-independent at nonzero velocity") {
  const CharacterModel c = make_two_link();
  const double h = 1.0 / 450.0;
  SceneConfig scene;
  scene.contact.enabled = false;
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    SimState s = SimState::rest(c, default_pose(c, 1.0));
    s.pose.joint_angles << rng.normal(), rng.normal();
    s.velocities.root_linear = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    s.velocities.root_angular = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    s.velocities.joint_rates << rng.normal(), rng.normal();

    Eigen::VectorXd tau1(2), tau2(2);
    tau1 << rng.normal() * 80.0, rng.normal() * 80.0;
    tau2 << rng.normal() * 80.0, rng.normal() * 80.0;
    const SimState n1 = substep(c, scene, s, tau1, Vector6d::Zero(), h);
    const SimState n2 = substep(c, scene, s, tau2, Vector6d::Zero(), h);
    SimState h1 = s, h2 = s;
    h1.velocities = n1.velocities;
    h2.velocities = n2.velocities;
    const Eigen::Vector3d diff =
        total_linear_momentum(c, h1) - total_linear_momentum(c, h2);
    CHECK(diff.norm() < 1e-10);
  }
}

TEST_CASE("resting cube penetration stays within the penalty prediction") {
  const CharacterModel c = make_free_cube(0.2);
  SceneConfig scene;
  SimState s = SimState::rest(c, default_pose(c, 0.1));  // bottom exactly at ground
  const Eigen::VectorXd tau(0);
  for (int i = 0; i < 2 * 450; ++i) {
    s = substep(c, scene, s, tau, Vector6d::Zero(), scene.substep_dt);
  }
  const double bottom = s.pose.root_translation.z() - 0.1;
  const double depth = scene.contact.ground_height - bottom;
  const double bound = c.total_mass() * 9.81 / scene.contact.kn;
  CHECK(depth > 0.0);
  CHECK(depth <= 1.1 * bound);
  CHECK(s.velocities.to_vector().norm() < 1e-3);  // settled
}

TEST_CASE("sliding box decelerates under friction") {
  const CharacterModel c = make_free_cube(0.2);
  SceneConfig scene;
  SimState s = SimState::rest(c, default_pose(c, 0.1));
  s.velocities.root_linear = Eigen::Vector3d(1.0, 0, 0);
  const Eigen::VectorXd tau(0);
  for (int i = 0; i < 450; ++i) {
    s = substep(c, scene, s, tau, Vector6d::Zero(), scene.substep_dt);
  }
  CHECK(s.velocities.root_linear.x() < 0.05);
  CHECK(s.pose.root_translation.x() > 0.01);
}

TEST_CASE("identical inputs give bit-identical trajectories") {
  const CharacterModel c = make_two_link();
  SceneConfig scene;
  Action a = unit_lambda_action(c, scene);
  a.u << 0.3, -0.4;
  a.eta << 0.01, 0, 0.02, 0, 0.001, 0;
  SimState s1 = SimState::rest(c, default_pose(c, 1.0));
  SimState s2 = s1;
  for (int i = 0; i < 10; ++i) {
    s1 = policy_step(c, scene, s1, a);
    s2 = policy_step(c, scene, s2, a);
  }
  CHECK(s1.pose.root_translation == s2.pose.root_translation);
  CHECK(s1.pose.root_orientation.coeffs() == s2.pose.root_orientation.coeffs());
  CHECK(s1.pose.joint_angles == s2.pose.joint_angles);
  CHECK(s1.velocities.to_vector() == s2.velocities.to_vector());
}

TEST_CASE("divergence raises with the offending quantity") {
  const CharacterModel c = make_two_link();
  const SceneConfig scene = space_scene();
  SimState s = SimState::rest(c, default_pose(c, 1.0));
  Eigen::VectorXd tau(2);
  tau << 1e308, 0.0;
  CHECK_THROWS_AS(
      {
        for (int i = 0; i < 5; ++i) {
          s = substep(c, scene, s, tau, Vector6d::Zero(), scene.substep_dt);
        }
      },
      SimulationDivergedError);
}

TEST_CASE("residual wrench accelerates the root") {
  const CharacterModel c = make_free_cube();
  const SceneConfig scene = space_scene();
  const SimState s0 = SimState::rest(c, default_pose(c, 1.0));
  Vector6d eta = Vector6d::Zero();
  eta(0) = 4.0;  // newtons along +x
  const SimState s1 = substep(c, scene, s0, Eigen::VectorXd(0), eta, 0.01);
  CHECK(s1.velocities.root_linear.x() ==
        doctest::Approx(4.0 / c.total_mass() * 0.01).epsilon(1e-9));
}
