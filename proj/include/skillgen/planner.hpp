#pragma once

// Motion generation: damped-least-squares inverse kinematics, joint-space
// RRT-Connect with shortcut smoothing, and the three-phase
// retreat / transit-or-transfer / approach pipeline that connects skills.

#include "skillgen/rng.hpp"
#include "skillgen/task.hpp"
#include "skillgen/world.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace skillgen {

struct IkRequest {
    Pose target;
    Eigen::VectorXd seed_q;
    double pos_tol = 1e-3;   // meters
    double rot_tol = 1e-2;   // radians
    int max_iters = 200;
    double damping = 0.05;
    int restarts = 10;
};

// Damped-LS iteration from the seed, then up to `restarts` uniform-random
// seeds. Every returned solution is re-verified through FK before return.
inline std::optional<Eigen::VectorXd> solve_ik(const RobotModel& robot, const IkRequest& req,
                                               Rng& rng) {
    if (req.pos_tol <= 0.0 || req.rot_tol <= 0.0)
        throw std::invalid_argument("solve_ik: tolerances must be positive");
    if (req.target.translation.norm() > robot.reach_bound()) return std::nullopt;

    // Wide per-iteration caps: this is a solver, not the 20 Hz controller.
    EeStepLimits solver_caps{0.2, 0.6};

    auto verified = [&](const Eigen::VectorXd& q) {
        const auto [dt, dr] = pose_distance(forward_kinematics(robot, q), req.target);
        return dt <= req.pos_tol && dr <= req.rot_tol && robot.within_limits(q);
    };

    Eigen::VectorXd q = robot.clamp_to_limits(req.seed_q);
    for (int attempt = 0; attempt <= req.restarts; ++attempt) {
        for (int it = 0; it < req.max_iters; ++it) {
            if (verified(q)) return q;
            q = detail::dls_step(robot, q, req.target, req.damping, solver_caps);
        }
        if (verified(q)) return q;
        for (std::size_t i = 0; i < robot.dof(); ++i)
            q[static_cast<Eigen::Index>(i)] = rng.uniform(robot.joints[i].lo, robot.joints[i].hi);
    }
    return std::nullopt;
}

// Snapshot against which configurations are validated: world (obstacle poses
// baked in), object poses, attachment, and the expected-contact ignore pairs.
struct CollisionContext {
    const World* world = nullptr;
    WorldState state;  // q is overwritten per query
    IgnoreSet ignore;

    bool config_valid(const Eigen::VectorXd& q) const {
        if (!world->robot.within_limits(q)) return false;
        WorldState s = state;
        s.q = q;
        if (s.attachment)
            s.object_poses.at(s.attachment->object) =
                compose(forward_kinematics(world->robot, q), s.attachment->grasp_transform);
        return !check_collision(*world, s, ignore);
    }

    // Densified straight-segment validity; direction-independent.
    bool edge_valid(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                    double resolution) const {
        const double dist = (b - a).norm();
        const int n = std::max(1, static_cast<int>(std::ceil(dist / resolution)));
        for (int k = 0; k <= n; ++k) {
            const double s = static_cast<double>(k) / n;
            if (!config_valid(a + s * (b - a))) return false;
        }
        return true;
    }
};

struct PlanRequest {
    Eigen::VectorXd start_q;
    Eigen::VectorXd goal_q;
    CollisionContext context;
    double step_size = 0.1;            // radians, joint-space extension step
    int max_iterations = 5000;
    double validity_resolution = 0.02;  // radians
    int shortcut_attempts = 50;
};

namespace detail {

struct Tree {
    std::vector<Eigen::VectorXd> nodes;
    std::vector<int> parent;

    int add(const Eigen::VectorXd& q, int par) {
        nodes.push_back(q);
        parent.push_back(par);
        return static_cast<int>(nodes.size()) - 1;
    }

    int nearest(const Eigen::VectorXd& q) const {
        int best = 0;
        double best_d = (nodes[0] - q).squaredNorm();
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            const double d = (nodes[i] - q).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    }

    std::vector<Eigen::VectorXd> path_from_root(int idx) const {
        std::vector<Eigen::VectorXd> out;
        for (int i = idx; i >= 0; i = parent[i]) out.push_back(nodes[i]);
        std::reverse(out.begin(), out.end());
        return out;
    }
};

enum class Extend { trapped, advanced, reached };

inline Extend extend_tree(Tree& tree, const Eigen::VectorXd& target, const PlanRequest& req,
                          int& new_idx) {
    const int near = tree.nearest(target);
    const Eigen::VectorXd& q_near = tree.nodes[near];
    const double d = (target - q_near).norm();
    Eigen::VectorXd q_new = target;
    bool reached = true;
    if (d > req.step_size) {
        q_new = q_near + (target - q_near) * (req.step_size / d);
        reached = false;
    }
    if (!req.context.edge_valid(q_near, q_new, req.validity_resolution)) return Extend::trapped;
    new_idx = tree.add(q_new, near);
    return reached ? Extend::reached : Extend::advanced;
}

inline double path_length(const std::vector<Eigen::VectorXd>& path) {
    double len = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) len += (path[i] - path[i - 1]).norm();
    return len;
}

// Random shortcutting; never increases joint-space length, preserves validity.
inline void shortcut(std::vector<Eigen::VectorXd>& path, const PlanRequest& req, Rng& rng) {
    for (int attempt = 0; attempt < req.shortcut_attempts && path.size() > 2; ++attempt) {
        std::size_t i = rng.uniform_index(path.size() - 1);
        std::size_t j = i + 1 + rng.uniform_index(path.size() - i - 1);
        if (j <= i + 1) continue;
        if (!req.context.edge_valid(path[i], path[j], req.validity_resolution)) continue;
        path.erase(path.begin() + static_cast<long>(i) + 1, path.begin() + static_cast<long>(j));
    }
}

// Re-densify so consecutive waypoints stay within step_size.
inline std::vector<Eigen::VectorXd> densify(const std::vector<Eigen::VectorXd>& path,
                                            double step) {
    std::vector<Eigen::VectorXd> out;
    if (path.empty()) return out;
    out.push_back(path.front());
    for (std::size_t i = 1; i < path.size(); ++i) {
        const double d = (path[i] - path[i - 1]).norm();
        const int n = std::max(1, static_cast<int>(std::ceil(d / step)));
        for (int k = 1; k <= n; ++k)
            out.push_back(path[i - 1] + (path[i] - path[i - 1]) * (static_cast<double>(k) / n));
    }
    return out;
}

}  // namespace detail

// Bidirectional RRT with greedy connect. Returns a start-to-goal waypoint
// sequence whose densified edges are collision-free under the context, or
// nullopt when the iteration budget is exhausted or an endpoint is invalid.
inline std::optional<std::vector<Eigen::VectorXd>> rrt_connect(const PlanRequest& req, Rng& rng) {
    const RobotModel& robot = req.context.world->robot;
    if (!req.context.config_valid(req.start_q) || !req.context.config_valid(req.goal_q))
        return std::nullopt;
    if ((req.start_q - req.goal_q).norm() < 1e-12)
        return std::vector<Eigen::VectorXd>{req.start_q};
    if (req.context.edge_valid(req.start_q, req.goal_q, req.validity_resolution)) {
        std::vector<Eigen::VectorXd> direct{req.start_q, req.goal_q};
        return detail::densify(direct, req.step_size);
    }

    detail::Tree a, b;
    a.add(req.start_q, -1);
    b.add(req.goal_q, -1);
    detail::Tree* grow = &a;
    detail::Tree* connect = &b;
    bool swapped = false;

    auto sample = [&]() {
        Eigen::VectorXd q(robot.dof());
        for (std::size_t i = 0; i < robot.dof(); ++i)
            q[static_cast<Eigen::Index>(i)] = rng.uniform(robot.joints[i].lo, robot.joints[i].hi);
        return q;
    };

    for (int it = 0; it < req.max_iterations; ++it) {
        const Eigen::VectorXd q_rand = sample();
        int new_idx = -1;
        if (detail::extend_tree(*grow, q_rand, req, new_idx) != detail::Extend::trapped) {
            const Eigen::VectorXd target = grow->nodes[new_idx];
            int c_idx = -1;
            detail::Extend st = detail::Extend::advanced;
            while (st == detail::Extend::advanced)
                st = detail::extend_tree(*connect, target, req, c_idx);
            if (st == detail::Extend::reached) {
                auto path_a = grow->path_from_root(new_idx);
                auto path_b = connect->path_from_root(c_idx);
                std::reverse(path_b.begin(), path_b.end());
                path_a.insert(path_a.end(), path_b.begin() + 1, path_b.end());
                if (swapped) std::reverse(path_a.begin(), path_a.end());
                detail::shortcut(path_a, req, rng);
                return detail::densify(path_a, req.step_size);
            }
        }
        std::swap(grow, connect);
        swapped = !swapped;
    }
    return std::nullopt;
}

enum class Phase { retreat, transit, transfer, approach };

inline const char* phase_name(Phase p) {
    switch (p) {
        case Phase::retreat: return "retreat";
        case Phase::transit: return "transit";
        case Phase::transfer: return "transfer";
        case Phase::approach: return "approach";
    }
    return "?";
}

struct MotionPlan {
    std::vector<Eigen::VectorXd> waypoints;
    struct PhaseSpan {
        Phase phase;
        std::size_t begin;  // waypoint index range [begin, end)
        std::size_t end;
    };
    std::vector<PhaseSpan> phases;
};

enum class FailureCause { none, ik_unreachable, plan_failure, execution_failure, task_failure, skill_timeout };

inline const char* failure_name(FailureCause c) {
    switch (c) {
        case FailureCause::none: return "none";
        case FailureCause::ik_unreachable: return "ik_unreachable";
        case FailureCause::plan_failure: return "plan_failure";
        case FailureCause::execution_failure: return "execution_failure";
        case FailureCause::task_failure: return "task_failure";
        case FailureCause::skill_timeout: return "skill_timeout";
    }
    return "?";
}

struct PlanOutcome {
    std::optional<MotionPlan> plan;
    FailureCause failure = FailureCause::none;
};

struct ThreePhaseOptions {
    std::string skill_object;           // object the upcoming skill manipulates
    std::vector<std::string> manipulated_objects;  // earlier skills' objects (expected contacts)
    double retreat_distance = 0.05;     // meters along the EE -z axis
    double approach_distance = 0.05;    // meters along the target EE z axis
    double step_size = 0.1;
    int max_iterations = 5000;
    double validity_resolution = 0.02;
    int shortcut_attempts = 50;
    IkRequest ik;                       // target/seed filled internally
    int goal_ik_tries = 5;              // IK solutions tried for a collision-valid goal
};

namespace detail {

// Resolved-rate tracking of a straight EE-frame line; one DLS tick per
// waypoint plus a settle budget at the end. Appends joint waypoints.
inline bool track_straight_line(const CollisionContext& ctx, Eigen::VectorXd& q,
                                const Pose& from, const Pose& to,
                                std::vector<Eigen::VectorXd>& out, double damping = 0.05) {
    const RobotModel& robot = ctx.world->robot;
    const auto [dt, dr] = pose_distance(from, to);
    const int n = std::max(1, static_cast<int>(std::ceil(std::max(
                               dt / (0.5 * robot.step_limits.max_translation),
                               dr / (0.5 * robot.step_limits.max_rotation)))));
    for (int k = 1; k <= n; ++k) {
        const Pose target = interpolate(from, to, static_cast<double>(k) / n);
        q = dls_step(robot, q, target, damping, robot.step_limits);
        if (!ctx.config_valid(q)) return false;
        out.push_back(q);
    }
    for (int settle = 0; settle < 60; ++settle) {
        const auto [et, er] = pose_distance(forward_kinematics(robot, q), to);
        if (et <= 2e-3 && er <= 2e-2) return true;
        q = dls_step(robot, q, to, damping, robot.step_limits);
        if (!ctx.config_valid(q)) return false;
        out.push_back(q);
    }
    const auto [et, er] = pose_distance(forward_kinematics(robot, q), to);
    return et <= 2e-3 && er <= 2e-2;
}

}  // namespace detail

// Retreat 5 cm along the current EE -z (expected contacts ignored), plan
// transit/transfer to a pre-pose 5 cm behind the target along its EE z axis,
// then approach straight into the target. Phase labels partition the
// waypoints; the transfer label is used whenever an object is attached.
inline PlanOutcome plan_three_phase(const World& world, const WorldState& state,
                                    const Pose& target_pose, const ThreePhaseOptions& opt,
                                    Rng& rng) {
    if (!target_pose.translation.allFinite())
        throw std::invalid_argument("plan_three_phase: non-finite target");
    MotionPlan plan;
    const std::string attached = state.attachment ? state.attachment->object : std::string();

    IgnoreSet contact_ignore;
    if (!opt.skill_object.empty()) {
        contact_ignore.insert(make_pair_sorted("robot", opt.skill_object));
        if (!attached.empty() && attached != opt.skill_object)
            contact_ignore.insert(make_pair_sorted(attached, opt.skill_object));
    }
    for (const auto& m : opt.manipulated_objects)
        contact_ignore.insert(make_pair_sorted("robot", m));

    CollisionContext contact_ctx{&world, state, contact_ignore};
    CollisionContext free_ctx{&world, state, {}};

    Eigen::VectorXd q = state.q;
    plan.waypoints.push_back(q);

    // Phase 1: retreat along the current EE -z.
    const Pose ee0 = forward_kinematics(world.robot, q);
    const Pose retreat_target =
        compose(ee0, Pose::from_translation(0, 0, -opt.retreat_distance));
    if (!detail::track_straight_line(contact_ctx, q, ee0, retreat_target, plan.waypoints))
        return {std::nullopt, FailureCause::plan_failure};
    plan.phases.push_back({Phase::retreat, 0, plan.waypoints.size()});

    // Phase 2: transit (or transfer while grasping) to the pre-pose.
    const Pose pre_pose =
        compose(target_pose, Pose::from_translation(0, 0, -opt.approach_distance));
    IkRequest ik = opt.ik;
    ik.target = pre_pose;
    ik.seed_q = q;
    std::optional<Eigen::VectorXd> goal_q;
    bool ik_solved = false;
    for (int t = 0; t < opt.goal_ik_tries; ++t) {
        auto sol = solve_ik(world.robot, ik, rng);
        if (!sol) break;
        ik_solved = true;
        if (free_ctx.config_valid(*sol)) {
            goal_q = sol;
            break;
        }
        // Seed the next try away from the colliding solution.
        ik.seed_q = Eigen::VectorXd(world.robot.dof());
        for (std::size_t i = 0; i < world.robot.dof(); ++i)
            ik.seed_q[static_cast<Eigen::Index>(i)] =
                rng.uniform(world.robot.joints[i].lo, world.robot.joints[i].hi);
    }
    if (!goal_q)
        return {std::nullopt,
                ik_solved ? FailureCause::plan_failure : FailureCause::ik_unreachable};

    PlanRequest preq;
    preq.start_q = q;
    preq.goal_q = *goal_q;
    preq.context = free_ctx;
    preq.step_size = opt.step_size;
    preq.max_iterations = opt.max_iterations;
    preq.validity_resolution = opt.validity_resolution;
    preq.shortcut_attempts = opt.shortcut_attempts;
    auto path = rrt_connect(preq, rng);
    if (!path) return {std::nullopt, FailureCause::plan_failure};
    const std::size_t transit_begin = plan.waypoints.size();
    for (std::size_t i = 1; i < path->size(); ++i) plan.waypoints.push_back((*path)[i]);
    q = *goal_q;
    plan.phases.push_back({attached.empty() ? Phase::transit : Phase::transfer, transit_begin,
                           plan.waypoints.size()});

    // Phase 3: approach straight into the target; expected contacts ignored.
    const std::size_t approach_begin = plan.waypoints.size();
    const Pose pre_actual = forward_kinematics(world.robot, q);
    if (!detail::track_straight_line(contact_ctx, q, pre_actual, target_pose, plan.waypoints))
        return {std::nullopt, FailureCause::plan_failure};
    plan.phases.push_back({Phase::approach, approach_begin, plan.waypoints.size()});

    return {plan, FailureCause::none};
}

struct ExecutionResult {
    WorldState state;
    std::vector<ControlStep> steps;  // per-tick absolute EE actions, gripper hold
};

// Joint-space tracking at 20 Hz. Waypoints are densified so the equivalent
// task-space action stays inside the per-tick caps, which keeps the logged
// motion steps replayable through the task-space controller.
inline std::optional<ExecutionResult> execute_plan(const World& world, const WorldState& state,
                                                   const MotionPlan& plan) {
    if (plan.waypoints.empty()) return ExecutionResult{state, {}};
    ExecutionResult out{state, {}};
    const double joint_resolution = 0.02;
    const double divergence_limit = 5 * 0.1;  // 5x the default plan step size
    const auto dense = detail::densify(plan.waypoints, joint_resolution);
    for (std::size_t i = 1; i < dense.size(); ++i) {
        if ((out.state.q - dense[i - 1]).norm() > divergence_limit)
            return std::nullopt;  // tracking divergence
        out.state.q = dense[i];
        const Pose ee = forward_kinematics(world.robot, out.state.q);
        if (out.state.attachment)
            out.state.object_poses.at(out.state.attachment->object) =
                compose(ee, out.state.attachment->grasp_transform);
        out.steps.push_back({ee, GripperCmd::hold, ee});
    }
    return out;
}

}  // namespace skillgen
