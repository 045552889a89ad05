#pragma once

// Scripted expert: replays a fixed per-skill move list against sampled
// resets, producing annotated source demonstrations (planner motion segments,
// script-emitted skill boundaries). Stands in for teleoperated source data.

#include "skillgen/datagen.hpp"
#include "skillgen/demos.hpp"
#include "skillgen/planner.hpp"
#include "skillgen/task.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace skillgen {

struct ExpertFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// Dense tick targets from the current EE pose to `goal`, executed through the
// controller with a settle budget. Steps are appended to the log.
inline void expert_track(const World& world, WorldState& state, const Pose& goal,
                         const IgnoreSet& ignore, std::vector<ControlStep>& log) {
    const EeStepLimits caps = world.robot.step_limits;
    const Pose start = forward_kinematics(world.robot, state.q);
    const auto [dt, dr] = pose_distance(start, goal);
    const int n = std::max(1, static_cast<int>(std::ceil(std::max(
                               dt / (0.5 * caps.max_translation), dr / (0.5 * caps.max_rotation)))));
    for (int k = 1; k <= n; ++k) {
        const Pose target = interpolate(start, goal, static_cast<double>(k) / n);
        state = step_task_space(world, state, target, GripperCmd::hold);
        if (check_collision(world, state, ignore))
            throw ExpertFailure("expert move collided");
        log.push_back({target, GripperCmd::hold, forward_kinematics(world.robot, state.q)});
    }
    for (int settle = 0; settle < 80; ++settle) {
        const auto [et, er] = pose_distance(forward_kinematics(world.robot, state.q), goal);
        if (et <= 2e-3 && er <= 1.5e-2) return;
        state = step_task_space(world, state, goal, GripperCmd::hold);
        if (check_collision(world, state, ignore))
            throw ExpertFailure("expert move collided while settling");
        log.push_back({goal, GripperCmd::hold, forward_kinematics(world.robot, state.q)});
    }
    throw ExpertFailure("expert move did not settle at its target");
}

}  // namespace detail

// One scripted episode on a sampled reset. Throws ExpertFailure when a move
// cannot be completed or the episode does not end in task success.
inline Demonstration run_scripted_expert(const TaskSpec& task, const std::string& variant,
                                         Rng& rng) {
    if (task.expert.empty()) throw ConfigError("task has no expert script");
    if (task.expert.skills.size() != task.skill_plan.size())
        throw ConfigError("expert script does not match the skill plan");

    const ResetResult rr = reset_with_obstacles(task, variant, rng);
    const World world = world_for_reset(task, rr);
    WorldState state = rr.state;

    detail::EpisodeLog log;
    std::vector<std::string> manipulated;
    for (std::size_t i = 0; i < task.skill_plan.size(); ++i) {
        const std::string& skill_object = task.skill_plan[i].object;
        const SkillScript& script = task.expert.skills[i];
        const Pose object_pose = state.object_poses.at(skill_object);

        // Motion segment: plan to the scripted initiation pose.
        ThreePhaseOptions opt;
        opt.skill_object = skill_object;
        opt.manipulated_objects = manipulated;
        const Pose initiation = compose(object_pose, script.initiation_offset);
        auto planned = plan_three_phase(world, state, initiation, opt, rng);
        if (!planned.plan)
            throw ExpertFailure(std::string("expert motion planning failed (") +
                                failure_name(planned.failure) + ") for skill " +
                                std::to_string(i));
        auto executed = execute_plan(world, state, *planned.plan);
        if (!executed) throw ExpertFailure("expert plan execution diverged");
        state = std::move(executed->state);
        log.raw.insert(log.raw.end(), executed->steps.begin(), executed->steps.end());

        // Skill segment: interpret the move list.
        const std::size_t skill_begin = log.raw.size();
        for (const auto& move : script.moves) {
            const IgnoreSet ignore =
                detail::skill_ignore_set(skill_object, state.attachment, manipulated);
            switch (move.kind) {
                case ExpertMove::Kind::object_rel:
                    detail::expert_track(world, state, compose(object_pose, move.pose), ignore,
                                         log.raw);
                    break;
                case ExpertMove::Kind::world_offset: {
                    const Pose cur = forward_kinematics(world.robot, state.q);
                    const Pose goal(cur.translation + move.pose.translation,
                                    move.pose.rotation * cur.rotation);
                    detail::expert_track(world, state, goal, ignore, log.raw);
                    break;
                }
                case ExpertMove::Kind::absolute:
                    detail::expert_track(world, state, move.pose, ignore, log.raw);
                    break;
                case ExpertMove::Kind::gripper: {
                    const Pose cur = forward_kinematics(world.robot, state.q);
                    state = step_task_space(world, state, cur, move.gripper);
                    if (check_collision(world, state, ignore))
                        throw ExpertFailure("expert gripper tick collided");
                    log.raw.push_back(
                        {cur, move.gripper, forward_kinematics(world.robot, state.q)});
                    break;
                }
            }
        }
        if (log.raw.size() == skill_begin)
            throw ExpertFailure("expert script produced an empty skill segment");
        log.boundaries.push_back({skill_begin, log.raw.size()});
        log.assignments.push_back({skill_object, object_pose});
        manipulated.push_back(skill_object);
        if (state.attachment &&
            std::find(manipulated.begin(), manipulated.end(), state.attachment->object) ==
                manipulated.end())
            manipulated.push_back(state.attachment->object);
    }

    if (!check_success(task, state)) throw ExpertFailure("expert episode did not reach success");

    DemoMeta meta;
    meta.task_name = task.name;
    meta.variant = variant;
    meta.initial_state = rr.state;
    meta.obstacle_poses = rr.obstacle_poses;
    meta.success = true;
    meta.provenance = {Provenance::Kind::human, -1, 0};
    return annotate_segments(log.raw, log.boundaries, log.assignments, meta);
}

// Records n annotated source demonstrations with fresh resets. The source
// index in the provenance is the episode's position in the emitted dataset.
inline std::vector<Demonstration> record_source_demos(const TaskSpec& task,
                                                      const std::string& variant, int n,
                                                      std::uint64_t seed) {
    std::vector<Demonstration> demos;
    demos.reserve(static_cast<std::size_t>(n));
    for (int e = 0; e < n; ++e) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
        try {
            demos.push_back(run_scripted_expert(task, variant, rng));
        } catch (const ExpertFailure& err) {
            throw ExpertFailure("episode " + std::to_string(e) + ": " + err.what());
        }
        demos.back().provenance.source_index = e;
    }
    return demos;
}

}  // namespace skillgen
