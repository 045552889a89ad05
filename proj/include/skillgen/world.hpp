#pragma once

// Quasi-static kinematic world: a serial revolute chain with capsule link
// geometry, free-floating rigid objects, static obstacles, and a rigid
// attachment model for grasping. Objects move only while attached; a control
// tick is a pure function of (state, target, gripper command).

#include "skillgen/collision.hpp"
#include "skillgen/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/Dense>

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace skillgen {

enum class GripperCmd { open, close, hold };

struct RevoluteJoint {
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // in the joint's local frame
    Pose origin;                                      // offset from the parent link frame
    double lo = -3.1415926535897931;
    double hi = 3.1415926535897931;
};

struct LinkCapsule {
    Eigen::Vector3d a = Eigen::Vector3d::Zero();  // endpoints in the link frame
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    double radius = 0.03;
};

struct GripperSpec {
    double max_width = 0.08;
    double grasp_radius = 0.03;  // close attaches an object whose center is this near the EE
};

// Per-tick task-space caps at 20 Hz; also the scale of normalized delta actions.
struct EeStepLimits {
    double max_translation = 0.05;  // meters per tick
    double max_rotation = 0.2;      // radians per tick
};

struct RobotModel {
    std::vector<RevoluteJoint> joints;
    std::vector<LinkCapsule> links;  // links[i] is rigid in the frame after joint i
    Pose ee_offset;                  // EE frame in the last link frame
    GripperSpec gripper;
    EeStepLimits step_limits;
    Eigen::VectorXd home_q;

    std::size_t dof() const { return joints.size(); }

    bool within_limits(const Eigen::VectorXd& q) const {
        for (std::size_t i = 0; i < joints.size(); ++i)
            if (q[static_cast<Eigen::Index>(i)] < joints[i].lo - 1e-12 ||
                q[static_cast<Eigen::Index>(i)] > joints[i].hi + 1e-12)
                return false;
        return true;
    }

    Eigen::VectorXd clamp_to_limits(Eigen::VectorXd q) const {
        for (std::size_t i = 0; i < joints.size(); ++i) {
            auto k = static_cast<Eigen::Index>(i);
            q[k] = std::clamp(q[k], joints[i].lo, joints[i].hi);
        }
        return q;
    }

    // Loose upper bound on EE distance from the base.
    double reach_bound() const {
        double r = ee_offset.translation.norm();
        for (const auto& j : joints) r += j.origin.translation.norm();
        return r;
    }
};

// 3R spatial arm (axes z, y, y; link lengths 0.3/0.3/0.15 m), small enough for
// closed-form checks. EE z points out of the palm (along the last link).
inline RobotModel default_robot() {
    RobotModel r;
    r.joints = {{Eigen::Vector3d::UnitZ(), Pose::identity(), -3.0, 3.0},
                {Eigen::Vector3d::UnitY(), Pose::from_translation(0.3, 0, 0), -2.6, 2.6},
                {Eigen::Vector3d::UnitY(), Pose::from_translation(0.3, 0, 0), -2.6, 2.6}};
    r.links = {{Eigen::Vector3d::Zero(), Eigen::Vector3d(0.3, 0, 0), 0.03},
               {Eigen::Vector3d::Zero(), Eigen::Vector3d(0.3, 0, 0), 0.03},
               {Eigen::Vector3d::Zero(), Eigen::Vector3d(0.15, 0, 0), 0.025}};
    r.ee_offset = compose(Pose::from_translation(0.15, 0, 0), Pose::rotate_y(1.5707963267948966));
    r.home_q = Eigen::Vector3d(0.0, -0.4, 0.8);
    return r;
}

// World frame of every link (frame after each joint's rotation).
inline std::vector<Pose> link_frames(const RobotModel& robot, const Eigen::VectorXd& q) {
    if (static_cast<std::size_t>(q.size()) != robot.dof())
        throw std::invalid_argument("link_frames: joint vector size mismatch");
    std::vector<Pose> frames;
    frames.reserve(robot.dof());
    Pose t;
    for (std::size_t i = 0; i < robot.dof(); ++i) {
        t = compose(compose(t, robot.joints[i].origin),
                    Pose::from_axis_angle(robot.joints[i].axis, q[static_cast<Eigen::Index>(i)]));
        frames.push_back(t);
    }
    return frames;
}

inline Pose forward_kinematics(const RobotModel& robot, const Eigen::VectorXd& q) {
    if (!robot.within_limits(q))
        throw std::domain_error("forward_kinematics: joint limits violated");
    const auto frames = link_frames(robot, q);
    return frames.empty() ? robot.ee_offset : compose(frames.back(), robot.ee_offset);
}

// Geometric Jacobian of the EE frame, 6 x dof, rows [v; w] in the world frame.
inline Eigen::Matrix<double, 6, Eigen::Dynamic> ee_jacobian(const RobotModel& robot,
                                                            const Eigen::VectorXd& q) {
    const auto frames = link_frames(robot, q);
    const Eigen::Vector3d p_ee = compose(frames.back(), robot.ee_offset).translation;
    Eigen::Matrix<double, 6, Eigen::Dynamic> j(6, static_cast<Eigen::Index>(robot.dof()));
    Pose parent;
    for (std::size_t i = 0; i < robot.dof(); ++i) {
        const Pose joint_frame = compose(parent, robot.joints[i].origin);
        const Eigen::Vector3d z = joint_frame.rotate(robot.joints[i].axis);
        const Eigen::Vector3d p = joint_frame.translation;
        j.col(static_cast<Eigen::Index>(i)).head<3>() = z.cross(p_ee - p);
        j.col(static_cast<Eigen::Index>(i)).tail<3>() = z;
        parent = frames[i];
    }
    return j;
}

struct ObjectSpec {
    std::string name;
    Shape shape;
    bool graspable = false;
    bool collision_enabled = true;
};

struct Obstacle {
    std::string name;
    Shape shape;
    Pose pose;
    std::vector<std::string> variants;  // active only in these variants; empty = all

    bool active_in(const std::string& variant) const {
        if (variants.empty()) return true;
        for (const auto& v : variants)
            if (v == variant) return true;
        return false;
    }
};

struct Attachment {
    std::string object;
    Pose grasp_transform;  // object pose in the EE frame
};

struct WorldState {
    Eigen::VectorXd q;
    double gripper_width = 0.0;
    std::map<std::string, Pose> object_poses;
    std::optional<Attachment> attachment;
    std::string variant;  // reset distribution this state was drawn from
};

struct World {
    RobotModel robot;
    std::vector<ObjectSpec> objects;
    std::vector<Obstacle> obstacles;

    const ObjectSpec* find_object(const std::string& name) const {
        for (const auto& o : objects)
            if (o.name == name) return &o;
        return nullptr;
    }
};

// Unordered entity-name pair; "robot" stands for all links.
using CollisionPair = std::pair<std::string, std::string>;

inline CollisionPair make_pair_sorted(std::string a, std::string b) {
    if (b < a) std::swap(a, b);
    return {std::move(a), std::move(b)};
}

using IgnoreSet = std::set<CollisionPair>;

inline bool ignored(const IgnoreSet& ignore, const std::string& a, const std::string& b) {
    return ignore.count(make_pair_sorted(a, b)) > 0;
}

// True iff any non-ignored pair overlaps. Checked pairs: link-obstacle,
// link-object, attached-object-obstacle, attached-object-free-object.
// Robot-vs-attached is always an expected contact and never checked.
inline bool check_collision(const World& world, const WorldState& state,
                            const IgnoreSet& ignore = {}) {
    const auto frames = link_frames(world.robot, state.q);
    const std::string attached_name =
        state.attachment ? state.attachment->object : std::string();

    auto link_shape = [&](std::size_t i) {
        return Shape::capsule(world.robot.links[i].a, world.robot.links[i].b,
                              world.robot.links[i].radius);
    };

    auto obstacle_active = [&](const Obstacle& ob) {
        return ob.variants.empty() || (!state.variant.empty() && ob.active_in(state.variant));
    };

    for (std::size_t i = 0; i < world.robot.links.size() && i < frames.size(); ++i) {
        const Shape ls = link_shape(i);
        for (const auto& ob : world.obstacles) {
            if (!obstacle_active(ob)) continue;
            if (ignored(ignore, "robot", ob.name)) continue;
            if (shapes_overlap(ls, frames[i], ob.shape, ob.pose)) return true;
        }
        for (const auto& obj : world.objects) {
            if (!obj.collision_enabled || obj.name == attached_name) continue;
            if (ignored(ignore, "robot", obj.name)) continue;
            if (shapes_overlap(ls, frames[i], obj.shape, state.object_poses.at(obj.name)))
                return true;
        }
    }

    if (state.attachment) {
        const ObjectSpec* att = world.find_object(attached_name);
        if (att && att->collision_enabled) {
            const Pose att_pose = state.object_poses.at(attached_name);
            for (const auto& ob : world.obstacles) {
                if (!obstacle_active(ob)) continue;
                if (ignored(ignore, attached_name, ob.name)) continue;
                if (shapes_overlap(att->shape, att_pose, ob.shape, ob.pose)) return true;
            }
            for (const auto& obj : world.objects) {
                if (!obj.collision_enabled || obj.name == attached_name) continue;
                if (ignored(ignore, attached_name, obj.name)) continue;
                if (shapes_overlap(att->shape, att_pose, obj.shape,
                                   state.object_poses.at(obj.name)))
                    return true;
            }
        }
    }
    return false;
}

// One executed 20 Hz tick: the absolute pose action commanded, the gripper
// command, and the EE pose achieved after the tick.
struct ControlStep {
    Pose action;
    GripperCmd gripper = GripperCmd::hold;
    Pose ee;
};

// Normalized delta action: per-dimension fractions of the per-tick caps,
// expected in [-1, 1] after clipping. Rotation is a world-frame rotation
// vector taking the current orientation to the target.
struct DeltaAction {
    Eigen::Vector3d dpos = Eigen::Vector3d::Zero();
    Eigen::Vector3d drot = Eigen::Vector3d::Zero();
    GripperCmd gripper = GripperCmd::hold;
};

inline DeltaAction delta_from_poses(const Pose& current, const Pose& target,
                                    const EeStepLimits& caps,
                                    GripperCmd gripper = GripperCmd::hold) {
    DeltaAction d;
    d.dpos = (target.translation - current.translation) / caps.max_translation;
    d.drot = rotation_log(target.rotation * current.rotation.conjugate()) / caps.max_rotation;
    d.gripper = gripper;
    return d;
}

inline DeltaAction clip_delta(DeltaAction d) {
    d.dpos = d.dpos.cwiseMax(-1.0).cwiseMin(1.0);
    d.drot = d.drot.cwiseMax(-1.0).cwiseMin(1.0);
    return d;
}

inline Pose apply_delta(const Pose& current, const DeltaAction& d, const EeStepLimits& caps) {
    return Pose(current.translation + d.dpos * caps.max_translation,
                rotation_exp(d.drot * caps.max_rotation) * current.rotation);
}

namespace detail {

// One damped-least-squares joint update toward a capped pose error.
inline Eigen::VectorXd dls_step(const RobotModel& robot, const Eigen::VectorXd& q,
                                const Pose& target, double damping,
                                const EeStepLimits& caps) {
    const Pose current = forward_kinematics(robot, q);
    Eigen::Vector3d et = target.translation - current.translation;
    Eigen::Vector3d er = rotation_log(target.rotation * current.rotation.conjugate());
    const double tn = et.norm();
    if (tn > caps.max_translation) et *= caps.max_translation / tn;
    const double rn = er.norm();
    if (rn > caps.max_rotation) er *= caps.max_rotation / rn;

    Eigen::Matrix<double, 6, 1> err;
    err << et, er;
    const auto j = ee_jacobian(robot, q);
    const Eigen::MatrixXd jjt = j * j.transpose() +
                                damping * damping * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::VectorXd dq = j.transpose() * jjt.ldlt().solve(err);
    return robot.clamp_to_limits(q + dq);
}

}  // namespace detail

// One 20 Hz control tick toward an absolute EE target. Deterministic;
// singularities are handled by damping, joint limits by clamping.
inline WorldState step_task_space(const World& world, const WorldState& state, const Pose& target,
                                  GripperCmd gripper, double damping = 0.05) {
    if (!target.translation.allFinite())
        throw std::invalid_argument("step_task_space: non-finite target");
    WorldState next = state;
    next.q = detail::dls_step(world.robot, state.q, target, damping, world.robot.step_limits);
    const Pose ee = forward_kinematics(world.robot, next.q);

    switch (gripper) {
        case GripperCmd::open:
            next.gripper_width = world.robot.gripper.max_width;
            if (next.attachment) next.attachment.reset();  // object freezes in place
            break;
        case GripperCmd::close: {
            next.gripper_width = 0.0;
            if (!next.attachment) {
                const ObjectSpec* best = nullptr;
                double best_d = world.robot.gripper.grasp_radius;
                for (const auto& obj : world.objects) {
                    if (!obj.graspable) continue;
                    const double d =
                        (next.object_poses.at(obj.name).translation - ee.translation).norm();
                    if (d <= best_d) {
                        best_d = d;
                        best = &obj;
                    }
                }
                if (best)
                    next.attachment =
                        Attachment{best->name, compose(inverse(ee), next.object_poses.at(best->name))};
            }
            break;
        }
        case GripperCmd::hold: break;
    }

    if (next.attachment)
        next.object_poses.at(next.attachment->object) =
            compose(ee, next.attachment->grasp_transform);
    return next;
}

}  // namespace skillgen
