#include "skillgen/task.hpp"
#include "skillgen/world.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace skillgen;

namespace {

constexpr double kPi = 3.14159265358979323846;

RobotModel planar_2r(double l1 = 0.4, double l2 = 0.4, double radius = 0.03) {
    RobotModel r;
    r.joints = {{Eigen::Vector3d::UnitZ(), Pose::identity(), -kPi, kPi},
                {Eigen::Vector3d::UnitZ(), Pose::from_translation(l1, 0, 0), -kPi, kPi}};
    r.links = {{Eigen::Vector3d::Zero(), Eigen::Vector3d(l1, 0, 0), radius},
               {Eigen::Vector3d::Zero(), Eigen::Vector3d(l2, 0, 0), radius}};
    r.ee_offset = Pose::from_translation(l2, 0, 0);
    r.home_q = Eigen::Vector2d(0, 0);
    return r;
}

WorldState state_at(const World& world, const Eigen::VectorXd& q) {
    WorldState s;
    s.q = q;
    s.gripper_width = world.robot.gripper.max_width;
    for (const auto& o : world.objects) s.object_poses[o.name] = Pose::identity();
    return s;
}

}  // namespace

TEST_CASE("forward kinematics: identity-offset chain returns ee_offset at zero") {
    RobotModel r;
    r.joints = {{Eigen::Vector3d::UnitZ(), Pose::identity(), -kPi, kPi},
                {Eigen::Vector3d::UnitY(), Pose::identity(), -kPi, kPi}};
    r.links = {{Eigen::Vector3d::Zero(), Eigen::Vector3d(0.1, 0, 0), 0.02},
               {Eigen::Vector3d::Zero(), Eigen::Vector3d(0.1, 0, 0), 0.02}};
    r.ee_offset = Pose::from_axis_angle(Eigen::Vector3d::UnitX(), 0.3,
                                        Eigen::Vector3d(0.1, 0.2, 0.3));
    r.home_q = Eigen::Vector2d(0, 0);
    CHECK(approx_equal(forward_kinematics(r, Eigen::Vector2d(0, 0)), r.ee_offset, 1e-12));
}

TEST_CASE("forward kinematics: single joint about z at 90 deg, unit link along x") {
    RobotModel r;
    r.joints = {{Eigen::Vector3d::UnitZ(), Pose::identity(), -kPi, kPi}};
    r.links = {{Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 0, 0), 0.02}};
    r.ee_offset = Pose::from_translation(1, 0, 0);
    r.home_q = Eigen::VectorXd::Zero(1);
    const Pose ee = forward_kinematics(r, Eigen::VectorXd::Constant(1, kPi / 2));
    CHECK(ee.translation.isApprox(Eigen::Vector3d(0, 1, 0), 1e-12));
}

TEST_CASE("forward kinematics: matrix-product oracle on random configurations") {
    const RobotModel robot = default_robot();
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd q(3);
        for (int i = 0; i < 3; ++i)
            q[i] = rng.uniform(robot.joints[i].lo, robot.joints[i].hi);

        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        for (std::size_t i = 0; i < robot.dof(); ++i) {
            m = m * robot.joints[i].origin.matrix();
            Eigen::Matrix4d rot = Eigen::Matrix4d::Identity();
            rot.block<3, 3>(0, 0) =
                Eigen::AngleAxisd(q[static_cast<int>(i)], robot.joints[i].axis).toRotationMatrix();
            m = m * rot;
        }
        m = m * robot.ee_offset.matrix();

        const Eigen::Matrix4d got = forward_kinematics(robot, q).matrix();
        CHECK((m - got).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("forward kinematics: limit violation is a domain error") {
    const RobotModel robot = default_robot();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(3);
    q[0] = robot.joints[0].hi + 0.5;
    CHECK_THROWS_AS(forward_kinematics(robot, q), std::domain_error);
}

TEST_CASE("check_collision: empty world is always free") {
    World world;
    world.robot = default_robot();
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd q(3);
        for (int k = 0; k < 3; ++k)
            q[k] = rng.uniform(world.robot.joints[k].lo, world.robot.joints[k].hi);
        CHECK_FALSE(check_collision(world, state_at(world, q)));
    }
}

TEST_CASE("check_collision: sphere on a link axis with overlapping radii") {
    World world;
    world.robot = planar_2r();
    world.obstacles.push_back(
        {"ball", Shape::sphere(0.05), Pose::from_translation(0.2, 0, 0), {}});
    const WorldState s = state_at(world, Eigen::Vector2d(0, 0));
    CHECK(check_collision(world, s));  // sphere centered on the first link axis
    CHECK_FALSE(check_collision(world, s, {make_pair_sorted("robot", "ball")}));
    CHECK_FALSE(check_collision(world, s, {make_pair_sorted("ball", "robot")}));  // order-free
}

TEST_CASE("check_collision: grid sweep matches dense point-sampling oracle") {
    World world;
    world.robot = planar_2r();
    const Eigen::Vector3d center(0.45, 0.3, 0.0);
    const double sphere_r = 0.12;
    world.obstacles.push_back({"s", Shape::sphere(sphere_r), Pose::from_translation(center), {}});

    int checked = 0;
    for (int i = 0; i <= 24; ++i) {
        for (int j = 0; j <= 24; ++j) {
            Eigen::VectorXd q(2);
            q << -kPi + 2 * kPi * i / 24.0, -kPi + 2 * kPi * j / 24.0;
            const auto frames = link_frames(world.robot, q);

            // Brute force: sample points along each link axis at 1e-3 spacing.
            double min_d = 1e9;
            for (std::size_t L = 0; L < 2; ++L) {
                const Eigen::Vector3d a = frames[L].apply(world.robot.links[L].a);
                const Eigen::Vector3d b = frames[L].apply(world.robot.links[L].b);
                const int n = static_cast<int>(std::ceil((b - a).norm() / 1e-3));
                for (int k = 0; k <= n; ++k) {
                    const Eigen::Vector3d p = a + (b - a) * (static_cast<double>(k) / n);
                    min_d = std::min(min_d, (p - center).norm());
                }
            }
            const double contact = world.robot.links[0].radius + sphere_r;
            if (std::abs(min_d - contact) < 2e-3) continue;  // ambiguous band near tangency
            ++checked;
            CHECK(check_collision(world, state_at(world, q)) == (min_d < contact));
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("check_collision: growing a capsule radius never removes a collision") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        World world;
        world.robot = planar_2r(0.4, 0.4, rng.uniform(0.01, 0.05));
        world.obstacles.push_back({"s", Shape::sphere(rng.uniform(0.02, 0.2)),
                                   Pose::from_translation(rng.uniform(-0.6, 0.6),
                                                          rng.uniform(-0.6, 0.6), 0),
                                   {}});
        Eigen::VectorXd q(2);
        q << rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi);
        const bool before = check_collision(world, state_at(world, q));
        for (auto& link : world.robot.links) link.radius += 0.02;
        const bool after = check_collision(world, state_at(world, q));
        if (before) CHECK(after);
    }
}

TEST_CASE("step_task_space: zero-motion tick") {
    World world;
    world.robot = default_robot();
    world.objects.push_back({"ball", Shape::sphere(0.02), true, true});
    WorldState s = state_at(world, Eigen::Vector3d(0.3, -0.2, 0.9));
    s.object_poses["ball"] = Pose::from_translation(0.5, 0.5, 0.5);
    const Pose ee = forward_kinematics(world.robot, s.q);
    const WorldState next = step_task_space(world, s, ee, GripperCmd::hold);
    CHECK((next.q - s.q).norm() < 1e-12);
    CHECK(next.gripper_width == s.gripper_width);
    CHECK(next.object_poses.at("ball").to_array() == s.object_poses.at("ball").to_array());
}

TEST_CASE("step_task_space: grasp rule and attachment invariant") {
    World world;
    world.robot = default_robot();
    world.objects.push_back({"ball", Shape::sphere(0.02), true, true});
    WorldState s = state_at(world, world.robot.home_q);
    const Pose ee = forward_kinematics(world.robot, s.q);
    s.object_poses["ball"] = Pose::from_translation(ee.translation + Eigen::Vector3d(0.0, 0.0, 0.02));

    const WorldState grasped = step_task_space(world, s, ee, GripperCmd::close);
    REQUIRE(grasped.attachment.has_value());
    CHECK(grasped.attachment->object == "ball");
    const Pose ee2 = forward_kinematics(world.robot, grasped.q);
    CHECK(approx_equal(grasped.attachment->grasp_transform,
                       compose(inverse(ee2), grasped.object_poses.at("ball")), 1e-12));

    // Attached object tracks FK(q) * grasp_transform through arbitrary motion.
    WorldState cur = grasped;
    Rng rng(9);
    for (int i = 0; i < 30; ++i) {
        const Pose target = Pose::from_axis_angle(
            rng.unit_vector(), rng.uniform(0.0, 0.4),
            ee.translation + Eigen::Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                                             rng.uniform(-0.1, 0.3)));
        cur = step_task_space(world, cur, target, GripperCmd::hold);
        const Pose expect =
            compose(forward_kinematics(world.robot, cur.q), cur.attachment->grasp_transform);
        CHECK(approx_equal(cur.object_poses.at("ball"), expect, 1e-9));
    }

    // Open detaches and freezes the object in place.
    const Pose frozen_at = cur.object_poses.at("ball");
    const WorldState released = step_task_space(world, cur, forward_kinematics(world.robot, cur.q),
                                                GripperCmd::open);
    CHECK_FALSE(released.attachment.has_value());
    CHECK(released.object_poses.at("ball").to_array() == frozen_at.to_array());
    CHECK(released.gripper_width == world.robot.gripper.max_width);
}

TEST_CASE("step_task_space: out-of-range object is not grasped") {
    World world;
    world.robot = default_robot();
    world.objects.push_back({"ball", Shape::sphere(0.02), true, true});
    WorldState s = state_at(world, world.robot.home_q);
    const Pose ee = forward_kinematics(world.robot, s.q);
    s.object_poses["ball"] =
        Pose::from_translation(ee.translation + Eigen::Vector3d(0.0, 0.0, 0.05));
    const WorldState next = step_task_space(world, s, ee, GripperCmd::close);
    CHECK_FALSE(next.attachment.has_value());
    CHECK(next.gripper_width == 0.0);
}

TEST_CASE("step_task_space: free objects never move, stepping is deterministic") {
    World world;
    world.robot = default_robot();
    world.objects.push_back({"a", Shape::sphere(0.02), true, true});
    world.objects.push_back({"b", Shape::box(Eigen::Vector3d(0.02, 0.02, 0.02)), false, true});
    WorldState s = state_at(world, world.robot.home_q);
    s.object_poses["a"] = Pose::from_translation(0.4, 0.2, 0.1);
    s.object_poses["b"] = Pose::from_translation(0.4, -0.2, 0.1);

    const Pose target = Pose::from_axis_angle(Eigen::Vector3d::UnitY(), 0.7,
                                              Eigen::Vector3d(0.45, 0.1, 0.25));
    WorldState x = s, y = s;
    for (int i = 0; i < 40; ++i) {
        x = step_task_space(world, x, target, GripperCmd::hold);
        y = step_task_space(world, y, target, GripperCmd::hold);
        CHECK(x.object_poses.at("a").to_array() == s.object_poses.at("a").to_array());
        CHECK(x.object_poses.at("b").to_array() == s.object_poses.at("b").to_array());
    }
    CHECK(x.q == y.q);
}

TEST_CASE("step_task_space: converges to reachable targets on the default 3R arm") {
    World world;
    world.robot = default_robot();
    Rng rng(321);
    int converged = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd q_goal(3);
        q_goal << rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 0.6), rng.uniform(0.2, 1.6);
        const Pose target = forward_kinematics(world.robot, q_goal);
        WorldState s = state_at(world, world.robot.home_q);
        for (int t = 0; t < 200; ++t) s = step_task_space(world, s, target, GripperCmd::hold);
        const auto [dt, dr] = pose_distance(forward_kinematics(world.robot, s.q), target);
        if (dt < 1e-3 && dr < 0.5 * kPi / 180) ++converged;
    }
    CHECK(converged == 20);
}

namespace {

TaskSpec two_ball_task() {
    TaskSpec task;
    task.name = "mini";
    task.world.robot = default_robot();
    task.world.objects.push_back({"ball", Shape::sphere(0.02), true, true});
    task.skill_plan = {{"lift", "ball"}};
    GoalCondition g;
    g.object = "ball";
    g.target = Pose::from_translation(0.4, 0.0, 0.2);
    g.pos_tol = 0.005;
    task.success = {g};
    VariantSpec fixed;
    fixed.object_regions["ball"] = {Eigen::Vector3d(0.4, 0.1, 0.05), Eigen::Vector3d(0.4, 0.1, 0.05),
                                    0.3, 0.3};
    VariantSpec wide;
    wide.object_regions["ball"] = {Eigen::Vector3d(0.3, -0.2, 0.05),
                                   Eigen::Vector3d(0.5, 0.2, 0.15), -kPi / 2, kPi / 2};
    task.variants = {{"fixed", fixed}, {"wide", wide}};
    return task;
}

}  // namespace

TEST_CASE("reset: degenerate region is deterministic, samples stay inside regions") {
    const TaskSpec task = two_ball_task();
    task.validate();

    Rng rng(1);
    const WorldState s = reset(task, "fixed", rng);
    CHECK(s.object_poses.at("ball").translation.isApprox(Eigen::Vector3d(0.4, 0.1, 0.05), 1e-12));
    CHECK(s.variant == "fixed");
    CHECK((s.q - task.world.robot.home_q).norm() == 0.0);
    CHECK(s.gripper_width == task.world.robot.gripper.max_width);

    Rng r1(42), r2(42);
    for (int i = 0; i < 20; ++i) {
        const WorldState a = reset(task, "wide", r1);
        const WorldState b = reset(task, "wide", r2);
        CHECK(a.object_poses.at("ball").to_array() == b.object_poses.at("ball").to_array());
        const Eigen::Vector3d t = a.object_poses.at("ball").translation;
        CHECK(t.x() >= 0.3);
        CHECK(t.x() <= 0.5);
        CHECK(t.y() >= -0.2);
        CHECK(t.y() <= 0.2);
        CHECK(t.z() >= 0.05);
        CHECK(t.z() <= 0.15);
    }

    CHECK_THROWS_AS(reset(task, "nope", r1), ConfigError);
}

TEST_CASE("reset: impossible clearance raises after 1000 rejections") {
    TaskSpec task = two_ball_task();
    task.world.objects.push_back({"rock", Shape::sphere(0.05), false, true});
    for (auto& [name, v] : task.variants)
        v.object_regions["rock"] = v.object_regions.at("ball");  // same degenerate/overlapping spot
    Rng rng(3);
    CHECK_THROWS_AS(reset(task, "fixed", rng), ConfigError);
}

TEST_CASE("check_success: tolerance shell and detachment") {
    const TaskSpec task = two_ball_task();
    WorldState s;
    s.q = task.world.robot.home_q;
    s.object_poses["ball"] = Pose::from_translation(0.4, 0.0, 0.2);
    CHECK(check_success(task, s));

    s.object_poses["ball"] = Pose::from_translation(0.4, 0.001, 0.2);  // 1 mm out
    CHECK(check_success(task, s));
    s.object_poses["ball"] = Pose::from_translation(0.4, 0.006, 0.2);  // 6 mm out
    CHECK_FALSE(check_success(task, s));

    s.object_poses["ball"] = Pose::from_translation(0.4, 0.0, 0.2);
    s.attachment = Attachment{"ball", Pose::identity()};
    CHECK_FALSE(check_success(task, s));  // must be released
}
