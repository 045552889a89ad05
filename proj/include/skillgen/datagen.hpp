#pragma once

// Demonstration amplification: adapt object-frame skill segments from a small
// source dataset to freshly reset scenes, stitch them with three-phase motion
// planning, inject action noise, optionally perturb initiation states with a
// planned recovery, and keep only attempts that end in task success.
// Baseline modes: collision-blind interpolation stitching (mimicgen_interp)
// and noisy replay of the source demonstrations (replay_noise).

#include "skillgen/demos.hpp"
#include "skillgen/planner.hpp"
#include "skillgen/rng.hpp"
#include "skillgen/task.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace skillgen {

enum class GenerationMode { skillgen, mimicgen_interp, replay_noise };

inline const char* mode_name(GenerationMode m) {
    switch (m) {
        case GenerationMode::skillgen: return "skillgen";
        case GenerationMode::mimicgen_interp: return "mimicgen_interp";
        case GenerationMode::replay_noise: return "replay_noise";
    }
    return "?";
}

struct GenerationConfig {
    GenerationMode mode = GenerationMode::skillgen;
    int num_target_demos = 0;
    double action_noise_sigma = 0.05;
    bool augment_initiation = false;
    TranslationNoiseSpec aug_translation{0.08};
    RotationNoiseSpec aug_rotation{80.0 * 3.14159265358979323846 / 180.0};
    int interp_steps = 5;
    std::uint64_t seed = 0;
    int max_attempts = -1;  // defaults to 50 * num_target_demos

    int attempts_cap() const {
        return max_attempts > 0 ? max_attempts : 50 * num_target_demos;
    }

    void validate() const {
        if (action_noise_sigma < 0.0) throw ConfigError("action_noise_sigma must be >= 0");
        if (interp_steps < 1) throw ConfigError("interp_steps must be >= 1");
        if (num_target_demos < 0) throw ConfigError("num_target_demos must be >= 0");
        if (aug_translation.half_width < 0.0 || aug_rotation.max_angle < 0.0)
            throw ConfigError("augmentation bounds must be >= 0");
    }
};

struct AttemptOutcome {
    bool success = false;
    FailureCause failure = FailureCause::none;
    int failed_skill_index = -1;  // -1 for episode-level failures
    std::optional<Demonstration> demo;
    std::uint64_t seed = 0;
};

// Reference selection: uniform over source demos for the first skill of an
// episode, then pinned to the same demo for the rest of it.
inline std::size_t select_reference(const std::vector<Demonstration>& source, int skill_index,
                                    std::optional<std::size_t> episode_choice, Rng& rng) {
    if (source.empty()) throw ConfigError("select_reference: empty source dataset");
    if (episode_choice) {
        if (*episode_choice >= source.size())
            throw ConfigError("select_reference: episode choice out of range");
        return *episode_choice;
    }
    if (skill_index > 0)
        throw std::invalid_argument("select_reference: later skills need the episode choice");
    return rng.uniform_index(source.size());
}

struct AdaptedSegment {
    Pose initiation_world;
    Pose termination_world;
    std::vector<ActionStep> actions_world;
};

// Re-anchors an object-frame segment to a new object pose; gripper commands
// are copied unchanged.
inline AdaptedSegment adapt_segment(const SkillSegmentRecord& ref, const Pose& new_object_pose) {
    AdaptedSegment out;
    out.initiation_world = compose(new_object_pose, ref.initiation_object_frame);
    out.termination_world = compose(new_object_pose, ref.termination_object_frame);
    out.actions_world.reserve(ref.actions_object_frame.size());
    for (const auto& a : ref.actions_object_frame)
        out.actions_world.push_back({compose(new_object_pose, a.pose), a.gripper});
    return out;
}

// Normalized delta toward an absolute target with additive gaussian noise
// applied before clipping; gripper commands stay noise-free.
inline DeltaAction noisy_delta(const Pose& current, const ActionStep& target,
                               const EeStepLimits& caps, double sigma, Rng& rng) {
    DeltaAction d = delta_from_poses(current, target.pose, caps, target.gripper);
    if (sigma > 0.0) {
        for (int i = 0; i < 3; ++i) d.dpos[i] += sigma * rng.gaussian();
        for (int i = 0; i < 3; ++i) d.drot[i] += sigma * rng.gaussian();
    }
    return clip_delta(d);
}

// Batch form over an advancing pose tracker. Tracker needs:
//   Pose current() const;  void advance(const Pose& target, GripperCmd g);
template <typename Tracker>
std::vector<DeltaAction> apply_action_noise(std::span<const ActionStep> targets, Tracker& tracker,
                                            const EeStepLimits& caps, double sigma, Rng& rng) {
    std::vector<DeltaAction> out;
    out.reserve(targets.size());
    for (const auto& t : targets) {
        const Pose cur = tracker.current();
        const DeltaAction d = noisy_delta(cur, t, caps, sigma, rng);
        tracker.advance(apply_delta(cur, d, caps), d.gripper);
        out.push_back(d);
    }
    return out;
}

// Pose tracker that reaches every commanded target exactly.
struct ExactTracker {
    Pose pose;
    Pose current() const { return pose; }
    void advance(const Pose& target, GripperCmd) { pose = target; }
};

struct AugmentedInitiation {
    Pose noised_pose;
    std::vector<ActionStep> recovery;  // starts at the noised pose, ends at the original
};

// Perturbs an initiation pose (translation noise in the world frame, rotation
// noise right-composed) and builds the recovery action sequence back to the
// original pose, dense enough to track within the per-tick caps.
inline AugmentedInitiation augment_initiation(const Pose& initiation,
                                              const TranslationNoiseSpec& t_spec,
                                              const RotationNoiseSpec& r_spec,
                                              const EeStepLimits& caps, Rng& rng) {
    const Pose noise = sample_pose_noise(rng, t_spec, r_spec);
    AugmentedInitiation out;
    out.noised_pose =
        Pose(initiation.translation + noise.translation, initiation.rotation * noise.rotation);
    const auto [dt, dr] = pose_distance(out.noised_pose, initiation);
    if (dt < 1e-12 && dr < 1e-12) return out;  // zero noise: no recovery needed

    const int n = std::max(1, static_cast<int>(std::ceil(std::max(
                               dt / (0.5 * caps.max_translation),
                               dr / (0.5 * caps.max_rotation)))));
    out.recovery.push_back({out.noised_pose, GripperCmd::hold});
    for (int k = 1; k <= n; ++k)
        out.recovery.push_back(
            {interpolate(out.noised_pose, initiation, static_cast<double>(k) / n),
             GripperCmd::hold});
    return out;
}

namespace detail {

// Expected contacts during skill execution: the robot against the skill's
// anchor object and against every object manipulated so far in the episode
// (a just-released object is still inside the gripper), plus the attached
// object against the skill's anchor object.
inline IgnoreSet skill_ignore_set(const std::string& skill_object,
                                  const std::optional<Attachment>& att,
                                  const std::vector<std::string>& manipulated = {}) {
    IgnoreSet ig;
    ig.insert(make_pair_sorted("robot", skill_object));
    for (const auto& m : manipulated) ig.insert(make_pair_sorted("robot", m));
    if (att && att->object != skill_object)
        ig.insert(make_pair_sorted(att->object, skill_object));
    return ig;
}

// Shared per-attempt execution scratchpad.
struct EpisodeLog {
    std::vector<ControlStep> raw;
    std::vector<std::pair<std::size_t, std::size_t>> boundaries;
    std::vector<SkillAssignment> assignments;
    std::vector<int> recovery_counts;
};

}  // namespace detail

inline void validate_source(const TaskSpec& task, const std::vector<Demonstration>& source) {
    if (source.empty()) throw ConfigError("source dataset is empty");
    for (const auto& d : source) {
        if (d.skills.size() != task.skill_plan.size())
            throw ConfigError("source demo skill count does not match the task skill plan");
        for (std::size_t i = 0; i < d.skills.size(); ++i)
            if (d.skills[i].object != task.skill_plan[i].object)
                throw ConfigError("source demo skill objects do not match the task skill plan");
    }
}

// One data-generation attempt (Algorithm: reset, then per skill read the
// object pose, select + adapt a reference segment, optionally noise the
// initiation, plan/execute the motion, execute the noisy skill actions; final
// success check decides whether the episode becomes a demonstration).
// Attempt-level failures are outcomes, never exceptions.
inline AttemptOutcome generate_one(const TaskSpec& task, const std::string& variant,
                                   const std::vector<Demonstration>& source,
                                   const GenerationConfig& config, std::uint64_t attempt_seed) {
    config.validate();
    validate_source(task, source);
    Rng rng(attempt_seed);
    AttemptOutcome out;
    out.seed = attempt_seed;

    // Scene setup.
    std::optional<std::size_t> episode_choice;
    ResetResult rr;
    if (config.mode == GenerationMode::replay_noise) {
        episode_choice = rng.uniform_index(source.size());
        const Demonstration& src = source[*episode_choice];
        if (src.variant != variant)
            throw ConfigError("replay_noise can only generate on the source reset distribution (" +
                              src.variant + ")");
        rr.state = src.initial_state;
        rr.obstacle_poses = src.obstacle_poses;
    } else {
        rr = reset_with_obstacles(task, variant, rng);
    }
    const World world = world_for_reset(task, rr);
    WorldState state = rr.state;
    const EeStepLimits caps = world.robot.step_limits;

    detail::EpisodeLog log;
    std::vector<std::string> manipulated;
    auto fail = [&](FailureCause cause, int skill) {
        out.failure = cause;
        out.failed_skill_index = skill;
        return out;
    };

    for (std::size_t i = 0; i < task.skill_plan.size(); ++i) {
        const std::string& skill_object = task.skill_plan[i].object;
        const int skill_idx = static_cast<int>(i);

        // Reference segment and world-frame targets.
        AdaptedSegment seg;
        Pose object_pose;
        if (config.mode == GenerationMode::replay_noise) {
            const SkillSegmentRecord& ref = source[*episode_choice].skills[i];
            object_pose = ref.object_pose_at_start;  // recorded, not re-estimated
            seg = adapt_segment(ref, object_pose);
        } else {
            object_pose = state.object_poses.at(skill_object);  // ground truth at segment start
            episode_choice = select_reference(source, skill_idx, episode_choice, rng);
            seg = adapt_segment(source[*episode_choice].skills[i], object_pose);
        }

        Pose motion_target = seg.initiation_world;
        std::vector<ActionStep> recovery;
        if (config.augment_initiation && config.mode != GenerationMode::replay_noise) {
            auto aug = augment_initiation(seg.initiation_world, config.aug_translation,
                                          config.aug_rotation, caps, rng);
            motion_target = aug.noised_pose;
            recovery = std::move(aug.recovery);
        }

        // Motion segment: plan or interpolate to the (noised) initiation pose.
        if (config.mode == GenerationMode::mimicgen_interp) {
            const Pose start_ee = forward_kinematics(world.robot, state.q);
            for (int k = 1; k <= config.interp_steps; ++k) {
                const Pose target = interpolate(start_ee, motion_target,
                                                static_cast<double>(k) / config.interp_steps);
                state = step_task_space(world, state, target, GripperCmd::hold);
                if (check_collision(world, state,
                                    detail::skill_ignore_set(skill_object, state.attachment,
                                                             manipulated)))
                    return fail(FailureCause::execution_failure, skill_idx);
                log.raw.push_back({target, GripperCmd::hold,
                                   forward_kinematics(world.robot, state.q)});
            }
        } else {
            ThreePhaseOptions opt;
            opt.skill_object = skill_object;
            opt.manipulated_objects = manipulated;
            auto planned = plan_three_phase(world, state, motion_target, opt, rng);
            if (!planned.plan) return fail(planned.failure, skill_idx);
            auto executed = execute_plan(world, state, *planned.plan);
            if (!executed) return fail(FailureCause::execution_failure, skill_idx);
            state = std::move(executed->state);
            log.raw.insert(log.raw.end(), executed->steps.begin(), executed->steps.end());
        }

        const std::size_t skill_begin = log.raw.size();

        // Recovery back to the original initiation pose: planner-style
        // (noise-free) execution recorded as skill data.
        int recovery_count = 0;
        if (!recovery.empty()) {
            const Pose recovery_goal = recovery.back().pose;
            for (const auto& a : recovery) {
                state = step_task_space(world, state, a.pose, a.gripper);
                if (check_collision(world, state,
                                    detail::skill_ignore_set(skill_object, state.attachment,
                                                             manipulated)))
                    return fail(FailureCause::execution_failure, skill_idx);
                log.raw.push_back({a.pose, a.gripper, forward_kinematics(world.robot, state.q)});
                ++recovery_count;
            }
            bool settled = false;
            for (int settle = 0; settle < 100 && !settled; ++settle) {
                const auto [dt, dr] =
                    pose_distance(forward_kinematics(world.robot, state.q), recovery_goal);
                settled = dt <= 1e-3 && dr <= 0.5 * 3.14159265358979323846 / 180.0;
                if (settled) break;
                state = step_task_space(world, state, recovery_goal, GripperCmd::hold);
                log.raw.push_back(
                    {recovery_goal, GripperCmd::hold, forward_kinematics(world.robot, state.q)});
                ++recovery_count;
            }
            if (!settled) return fail(FailureCause::execution_failure, skill_idx);
        }

        // Skill actions through the noisy normalized-delta channel.
        for (const auto& a : seg.actions_world) {
            const Pose cur = forward_kinematics(world.robot, state.q);
            const DeltaAction d = noisy_delta(cur, a, caps, config.action_noise_sigma, rng);
            const Pose target = apply_delta(cur, d, caps);
            state = step_task_space(world, state, target, a.gripper);
            if (check_collision(world, state,
                                detail::skill_ignore_set(skill_object, state.attachment,
                                                         manipulated)))
                return fail(FailureCause::execution_failure, skill_idx);
            log.raw.push_back({target, a.gripper, forward_kinematics(world.robot, state.q)});
        }

        if (static_cast<int>(log.raw.size()) > task.horizon)
            return fail(FailureCause::execution_failure, skill_idx);

        log.boundaries.push_back({skill_begin, log.raw.size()});
        log.assignments.push_back({skill_object, object_pose});
        log.recovery_counts.push_back(recovery_count);
        manipulated.push_back(skill_object);
        if (state.attachment &&
            std::find(manipulated.begin(), manipulated.end(), state.attachment->object) ==
                manipulated.end())
            manipulated.push_back(state.attachment->object);
    }

    if (!check_success(task, state)) return fail(FailureCause::task_failure, -1);

    DemoMeta meta;
    meta.task_name = task.name;
    meta.variant = variant;
    meta.initial_state = rr.state;
    meta.obstacle_poses = rr.obstacle_poses;
    meta.success = true;
    meta.provenance = {Provenance::Kind::generated, static_cast<int>(*episode_choice),
                       attempt_seed};
    Demonstration demo = annotate_segments(log.raw, log.boundaries, log.assignments, meta);
    for (std::size_t i = 0; i < demo.skills.size(); ++i)
        demo.skills[i].recovery_steps = log.recovery_counts[i];
    demo.validate();

    out.success = true;
    out.demo = std::move(demo);
    return out;
}

enum class GenerationStatus { ok, shortfall };

struct GenerationResult {
    std::vector<Demonstration> demos;
    DatasetStats stats;
    GenerationStatus status = GenerationStatus::ok;
};

// Runs attempts with per-attempt seeds derive_seed(config.seed, i) until the
// in-order prefix of attempt results contains num_target_demos successes or
// the attempt cap is reached. The schedule is index-driven, so any worker
// count produces the same demonstrations in the same order.
inline GenerationResult generate_dataset(const TaskSpec& task, const std::string& variant,
                                         const std::vector<Demonstration>& source,
                                         const GenerationConfig& config, int workers = 1) {
    config.validate();
    validate_source(task, source);
    if (config.mode == GenerationMode::replay_noise)
        for (const auto& d : source)
            if (d.variant != variant)
                throw ConfigError(
                    "replay_noise can only generate on the source reset distribution (" +
                    d.variant + ")");

    GenerationResult result;
    if (config.num_target_demos == 0) return result;

    const int cap = config.attempts_cap();
    std::vector<std::optional<AttemptOutcome>> results(static_cast<std::size_t>(cap));
    std::atomic<int> next{0};
    std::mutex m;
    int frontier = 0;
    int prefix_successes = 0;
    std::atomic<int> stop_at{cap};
    std::exception_ptr error;

    auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= stop_at.load() || i >= cap) return;
            AttemptOutcome outcome;
            try {
                outcome = generate_one(task, variant, source, config,
                                       derive_seed(config.seed, static_cast<std::uint64_t>(i)));
            } catch (...) {
                std::lock_guard<std::mutex> lock(m);
                if (!error) error = std::current_exception();
                stop_at.store(0);
                return;
            }
            std::lock_guard<std::mutex> lock(m);
            results[static_cast<std::size_t>(i)] = std::move(outcome);
            while (frontier < cap && results[static_cast<std::size_t>(frontier)]) {
                if (results[static_cast<std::size_t>(frontier)]->success) ++prefix_successes;
                ++frontier;
                if (prefix_successes == config.num_target_demos) {
                    stop_at.store(frontier);
                    return;
                }
            }
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    const int attempts = std::min(stop_at.load(), cap);
    for (int i = 0; i < attempts; ++i) {
        const auto& r = results[static_cast<std::size_t>(i)];
        if (!r) throw std::logic_error("generate_dataset: incomplete attempt prefix");
        ++result.stats.attempts;
        if (r->success) {
            ++result.stats.successes;
            result.demos.push_back(*r->demo);
        } else {
            ++result.stats.failures[r->failed_skill_index][r->failure];
        }
    }
    result.stats.validate();
    result.status = result.stats.successes >= config.num_target_demos ? GenerationStatus::ok
                                                                      : GenerationStatus::shortfall;
    return result;
}

}  // namespace skillgen
