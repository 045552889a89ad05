#pragma once

// Task file loading. Tasks are JSON documents with sections robot / objects /
// obstacles / skill_plan / variants / success and an optional scripted
// expert. All lengths are meters, angles radians, poses 7-tuples
// [tx, ty, tz, qw, qx, qy, qz].

#include "skillgen/demos.hpp"
#include "skillgen/task.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace skillgen {
namespace io {

inline Eigen::Vector3d vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Shape shape_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "sphere") return Shape::sphere(j.at("radius").get<double>());
    if (type == "box") return Shape::box(vec3_from_json(j.at("half_extents")));
    if (type == "capsule")
        return Shape::capsule(vec3_from_json(j.at("a")), vec3_from_json(j.at("b")),
                              j.at("radius").get<double>());
    throw ParseError("unknown shape type: " + type);
}

inline RobotModel robot_from_json(const json& j) {
    RobotModel r;
    for (const auto& joint : j.at("joints")) {
        RevoluteJoint rj;
        rj.axis = vec3_from_json(joint.at("axis")).normalized();
        rj.origin = pose_from_json(joint.at("origin"));
        rj.lo = joint.at("limits")[0].get<double>();
        rj.hi = joint.at("limits")[1].get<double>();
        if (rj.lo >= rj.hi) throw ParseError("joint limits must satisfy lo < hi");
        r.joints.push_back(rj);
    }
    for (const auto& link : j.at("links")) {
        LinkCapsule lc;
        lc.a = vec3_from_json(link.at("a"));
        lc.b = vec3_from_json(link.at("b"));
        lc.radius = link.at("radius").get<double>();
        if (lc.radius <= 0.0) throw ParseError("link capsule radius must be positive");
        r.links.push_back(lc);
    }
    r.ee_offset = pose_from_json(j.at("ee_offset"));
    if (j.contains("gripper")) {
        r.gripper.max_width = j.at("gripper").value("max_width", r.gripper.max_width);
        r.gripper.grasp_radius = j.at("gripper").value("grasp_radius", r.gripper.grasp_radius);
    }
    if (j.contains("step_limits")) {
        r.step_limits.max_translation =
            j.at("step_limits").value("max_translation", r.step_limits.max_translation);
        r.step_limits.max_rotation =
            j.at("step_limits").value("max_rotation", r.step_limits.max_rotation);
    }
    const auto& home = j.at("home_q");
    r.home_q = Eigen::VectorXd(home.size());
    for (std::size_t i = 0; i < home.size(); ++i)
        r.home_q[static_cast<Eigen::Index>(i)] = home[i].get<double>();
    return r;
}

inline ResetRegion region_from_json(const json& j) {
    ResetRegion r;
    const auto& box = j.at("box");
    r.lo = vec3_from_json(box.at(0));
    r.hi = vec3_from_json(box.at(1));
    if (j.contains("yaw")) {
        r.yaw_lo = j.at("yaw")[0].get<double>();
        r.yaw_hi = j.at("yaw")[1].get<double>();
    }
    return r;
}

inline ExpertMove move_from_json(const json& j) {
    ExpertMove m;
    const std::string type = j.at("type").get<std::string>();
    if (type == "object_rel") {
        m.kind = ExpertMove::Kind::object_rel;
        m.pose = pose_from_json(j.at("pose"));
    } else if (type == "world_offset") {
        m.kind = ExpertMove::Kind::world_offset;
        m.pose = Pose::from_translation(vec3_from_json(j.at("offset")));
    } else if (type == "absolute") {
        m.kind = ExpertMove::Kind::absolute;
        m.pose = pose_from_json(j.at("pose"));
    } else if (type == "gripper") {
        m.kind = ExpertMove::Kind::gripper;
        m.gripper = gripper_from_string(j.at("cmd").get<std::string>());
    } else {
        throw ParseError("unknown expert move type: " + type);
    }
    return m;
}

}  // namespace io

inline constexpr const char* kTaskSchema = "skillgen.task";

inline TaskSpec task_from_json(const nlohmann::json& j) {
    using nlohmann::json;
    if (j.value("schema", std::string()) != kTaskSchema)
        throw ParseError("not a task file (schema mismatch)");
    TaskSpec task;
    task.name = j.at("name").get<std::string>();
    task.world.robot = io::robot_from_json(j.at("robot"));

    for (const auto& o : j.at("objects")) {
        ObjectSpec spec;
        spec.name = o.at("name").get<std::string>();
        spec.shape = io::shape_from_json(o.at("shape"));
        spec.graspable = o.value("graspable", false);
        spec.collision_enabled = o.value("collision", true);
        if (task.world.find_object(spec.name))
            throw ParseError("duplicate object name: " + spec.name);
        task.world.objects.push_back(std::move(spec));
    }

    for (const auto& o : j.value("obstacles", json::array())) {
        Obstacle ob;
        ob.name = o.at("name").get<std::string>();
        ob.shape = io::shape_from_json(o.at("shape"));
        if (o.contains("pose")) ob.pose = io::pose_from_json(o.at("pose"));
        if (o.contains("variants"))
            ob.variants = o.at("variants").get<std::vector<std::string>>();
        task.world.obstacles.push_back(std::move(ob));
    }

    for (const auto& s : j.at("skill_plan"))
        task.skill_plan.push_back(
            {s.at("skill").get<std::string>(), s.at("object").get<std::string>()});

    for (const auto& [vname, v] : j.at("variants").items()) {
        VariantSpec spec;
        const json object_regions = v.value("objects", json::object());
        for (const auto& [oname, region] : object_regions.items())
            spec.object_regions[oname] = io::region_from_json(region);
        const json obstacle_regions = v.value("obstacles", json::object());
        for (const auto& [oname, region] : obstacle_regions.items())
            spec.obstacle_regions[oname] = io::region_from_json(region);
        task.variants[vname] = std::move(spec);
    }

    for (const auto& g : j.at("success")) {
        GoalCondition cond;
        cond.object = g.at("object").get<std::string>();
        if (g.contains("relative_to")) cond.relative_to = g.at("relative_to").get<std::string>();
        if (g.contains("region")) {
            cond.region_box = {io::vec3_from_json(g.at("region").at(0)),
                               io::vec3_from_json(g.at("region").at(1))};
        } else {
            cond.target = io::pose_from_json(g.at("target"));
            cond.pos_tol = g.value("pos_tol", cond.pos_tol);
            if (g.contains("rot_tol")) cond.rot_tol = g.at("rot_tol").get<double>();
        }
        cond.require_detached = g.value("detached", true);
        task.success.push_back(std::move(cond));
    }

    task.horizon = j.value("horizon", task.horizon);
    task.reset_clearance = j.value("reset_clearance", task.reset_clearance);

    if (j.contains("expert")) {
        for (const auto& s : j.at("expert").at("skills")) {
            SkillScript script;
            script.initiation_offset = io::pose_from_json(s.at("initiation_offset"));
            for (const auto& m : s.at("moves")) script.moves.push_back(io::move_from_json(m));
            task.expert.skills.push_back(std::move(script));
        }
    }

    task.validate();
    return task;
}

inline TaskSpec load_task(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open task file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    try {
        return task_from_json(j);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace skillgen
