#pragma once

// Task definitions: a world plus an ordered skill plan, per-variant reset
// distributions, a declarative success predicate, and an optional scripted
// expert used to record source demonstrations.

#include "skillgen/rng.hpp"
#include "skillgen/world.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace skillgen {

// Task/config problems (bad files, unknown variants, unsatisfiable resets).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResetRegion {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();  // position box, world frame
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();
    double yaw_lo = 0.0;
    double yaw_hi = 0.0;
};

struct VariantSpec {
    std::map<std::string, ResetRegion> object_regions;
    std::map<std::string, ResetRegion> obstacle_regions;  // sampled scene furniture
};

struct SkillStep {
    std::string skill;   // label, e.g. "pick"
    std::string object;  // the object the skill's actions are anchored to
};

// Object within tolerance of a goal pose (optionally relative to another
// object's current pose) or inside a goal box, and detached from the gripper.
struct GoalCondition {
    std::string object;
    std::optional<std::string> relative_to;
    Pose target;
    double pos_tol = 0.02;
    std::optional<double> rot_tol;
    std::optional<std::pair<Eigen::Vector3d, Eigen::Vector3d>> region_box;
    bool require_detached = true;
};

// Scripted expert: a fixed move list per skill, interpreted at 20 Hz.
struct ExpertMove {
    enum class Kind { object_rel, world_offset, absolute, gripper };
    Kind kind = Kind::object_rel;
    Pose pose;                            // object_rel / absolute target, or world_offset delta
    GripperCmd gripper = GripperCmd::hold;  // for Kind::gripper
};

struct SkillScript {
    Pose initiation_offset;  // initiation pose in the skill object's frame
    std::vector<ExpertMove> moves;
};

struct ExpertScript {
    std::vector<SkillScript> skills;  // parallel to the task's skill plan

    bool empty() const { return skills.empty(); }
};

struct TaskSpec {
    std::string name;
    World world;
    std::vector<SkillStep> skill_plan;
    std::map<std::string, VariantSpec> variants;
    std::vector<GoalCondition> success;
    int horizon = 2000;
    double reset_clearance = 0.02;  // margin between object bounding spheres
    ExpertScript expert;

    const VariantSpec& variant(const std::string& name) const {
        auto it = variants.find(name);
        if (it == variants.end()) throw ConfigError("unknown variant: " + name);
        return it->second;
    }

    void validate() const {
        if (world.robot.dof() == 0) throw ConfigError("task robot has no joints");
        if (world.robot.links.size() != world.robot.dof())
            throw ConfigError("task robot needs one link capsule per joint");
        if (static_cast<std::size_t>(world.robot.home_q.size()) != world.robot.dof())
            throw ConfigError("home_q size mismatch");
        for (const auto& step : skill_plan)
            if (!world.find_object(step.object))
                throw ConfigError("skill plan references unknown object: " + step.object);
        for (const auto& g : success)
            if (!world.find_object(g.object))
                throw ConfigError("success predicate references unknown object: " + g.object);
        const double reach = world.robot.reach_bound();
        for (const auto& [vname, v] : variants) {
            for (const auto& obj : world.objects)
                if (!v.object_regions.count(obj.name))
                    throw ConfigError("variant " + vname + " missing region for " + obj.name);
            for (const auto& [oname, r] : v.object_regions) {
                if (!world.find_object(oname))
                    throw ConfigError("variant " + vname + " region for unknown object " + oname);
                if ((r.hi - r.lo).minCoeff() < -1e-12 || r.yaw_hi < r.yaw_lo)
                    throw ConfigError("variant " + vname + ": inverted region for " + oname);
                if (r.lo.norm() > reach || r.hi.norm() > reach)
                    throw ConfigError("variant " + vname + ": region for " + oname +
                                      " outside workspace bounds");
            }
        }
        if (!expert.empty() && expert.skills.size() != skill_plan.size())
            throw ConfigError("expert script length does not match skill plan");
    }
};

namespace detail {

inline Pose sample_region(const ResetRegion& r, Rng& rng) {
    Eigen::Vector3d t;
    for (int i = 0; i < 3; ++i)
        t[i] = r.hi[i] > r.lo[i] ? rng.uniform(r.lo[i], r.hi[i]) : r.lo[i];
    const double yaw = r.yaw_hi > r.yaw_lo ? rng.uniform(r.yaw_lo, r.yaw_hi) : r.yaw_lo;
    return Pose::from_axis_angle(Eigen::Vector3d::UnitZ(), yaw, t);
}

}  // namespace detail

// Samples object (and variant obstacle) poses, rejecting layouts where object
// bounding spheres come within `reset_clearance` of each other or of an active
// obstacle. Robot at home, gripper open. Obstacle poses are written into the
// returned world copy by the caller via sampled_obstacles.
struct ResetResult {
    WorldState state;
    std::map<std::string, Pose> obstacle_poses;  // for variant-sampled obstacles
};

inline ResetResult reset_with_obstacles(const TaskSpec& task, const std::string& variant_name,
                                        Rng& rng) {
    const VariantSpec& variant = task.variant(variant_name);
    ResetResult out;
    out.state.q = task.world.robot.home_q;
    out.state.gripper_width = task.world.robot.gripper.max_width;
    out.state.variant = variant_name;

    for (const auto& [oname, region] : variant.obstacle_regions) {
        bool found = false;
        for (const auto& ob : task.world.obstacles) found = found || ob.name == oname;
        if (!found) throw ConfigError("variant obstacle region for unknown obstacle " + oname);
        out.obstacle_poses[oname] = detail::sample_region(region, rng);
    }

    auto obstacle_pose = [&](const Obstacle& ob) {
        auto it = out.obstacle_poses.find(ob.name);
        return it == out.obstacle_poses.end() ? ob.pose : it->second;
    };

    for (int tries = 0; tries < 1000; ++tries) {
        std::map<std::string, Pose> poses;
        bool ok = true;
        for (const auto& obj : task.world.objects) {
            const Pose p = detail::sample_region(variant.object_regions.at(obj.name), rng);
            for (const auto& [other_name, other_pose] : poses) {
                const ObjectSpec* other = task.world.find_object(other_name);
                const double clearance = (p.translation - other_pose.translation).norm() -
                                         obj.shape.bounding_radius() -
                                         other->shape.bounding_radius();
                if (clearance < task.reset_clearance) ok = false;
            }
            if (obj.collision_enabled) {
                for (const auto& ob : task.world.obstacles) {
                    if (!ob.active_in(variant_name)) continue;
                    if (shape_distance(obj.shape, p, ob.shape, obstacle_pose(ob)) <= 0.0)
                        ok = false;
                }
            }
            if (!ok) break;
            poses[obj.name] = p;
        }
        if (ok) {
            out.state.object_poses = std::move(poses);
            return out;
        }
    }
    throw ConfigError("reset: no clearance-satisfying layout after 1000 rejections (variant " +
                      variant_name + ")");
}

// World copy with this reset's sampled obstacle poses baked in.
inline World world_for_reset(const TaskSpec& task, const ResetResult& r) {
    World w = task.world;
    for (auto& ob : w.obstacles) {
        auto it = r.obstacle_poses.find(ob.name);
        if (it != r.obstacle_poses.end()) ob.pose = it->second;
    }
    return w;
}

inline WorldState reset(const TaskSpec& task, const std::string& variant_name, Rng& rng) {
    return reset_with_obstacles(task, variant_name, rng).state;
}

inline bool check_success(const TaskSpec& task, const WorldState& state) {
    for (const auto& g : task.success) {
        const Pose& p = state.object_poses.at(g.object);
        if (g.require_detached && state.attachment && state.attachment->object == g.object)
            return false;
        if (g.region_box) {
            const auto& [lo, hi] = *g.region_box;
            for (int i = 0; i < 3; ++i)
                if (p.translation[i] < lo[i] || p.translation[i] > hi[i]) return false;
        } else {
            Pose target = g.target;
            if (g.relative_to) target = compose(state.object_poses.at(*g.relative_to), g.target);
            const auto [dt, dr] = pose_distance(p, target);
            if (dt > g.pos_tol) return false;
            if (g.rot_tol && dr > *g.rot_tol) return false;
        }
    }
    return true;
}

}  // namespace skillgen
