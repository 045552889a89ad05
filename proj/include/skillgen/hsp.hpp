#pragma once

// Hybrid skill policies: a skill couples an initiation predictor (where the
// motion planner should hand off), a control policy, and a termination
// predictor. Deployment alternates planned motion with policy rollouts.
// Predictors are non-neural reference implementations (nearest-neighbor
// classify/regress, nearest-trajectory replay, 1-NN threshold termination)
// behind interfaces where richer models plug in.

#include "skillgen/datagen.hpp"
#include "skillgen/demos.hpp"
#include "skillgen/planner.hpp"
#include "skillgen/task.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace skillgen {

struct ObservabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// What a deployed policy may see. Current object poses are present only in
// privileged modes (HSP-Class / oracle); HSP-Reg runs without them.
struct Observation {
    Pose ee_pose;
    double gripper_width = 0.0;
    std::map<std::string, Pose> episode_start_object_poses;
    std::optional<std::map<std::string, Pose>> current_object_poses;

    const Pose& current_object_pose(const std::string& name) const {
        if (!current_object_poses)
            throw ObservabilityError("current object poses are not observable in this mode");
        auto it = current_object_poses->find(name);
        if (it == current_object_poses->end())
            throw ObservabilityError("no current pose for object " + name);
        return it->second;
    }
};

enum class ObservationMode { privileged, reduced };

inline Observation observe(const World& world, const WorldState& state,
                           const std::map<std::string, Pose>& episode_start,
                           ObservationMode mode) {
    Observation o;
    o.ee_pose = forward_kinematics(world.robot, state.q);
    o.gripper_width = state.gripper_width;
    o.episode_start_object_poses = episode_start;
    if (mode == ObservationMode::privileged) o.current_object_poses = state.object_poses;
    return o;
}

// Flat feature vector: episode-start object poses (sorted by name) then the
// EE pose, 7 numbers each.
inline std::vector<double> observation_features(const std::map<std::string, Pose>& episode_start,
                                                const Pose& ee) {
    std::vector<double> f;
    f.reserve(7 * (episode_start.size() + 1));
    for (const auto& [name, pose] : episode_start)
        for (double v : pose.to_array()) f.push_back(v);
    for (double v : ee.to_array()) f.push_back(v);
    return f;
}

inline double feature_distance2(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

// ---------------------------------------------------------------------------
// Training label construction
// ---------------------------------------------------------------------------

struct InitiationRecord {
    int skill_index = 0;
    std::vector<double> features;  // observation at the end of the preceding segment
    Pose target_world;             // the pose handed to the motion planner
    int source_index = -1;         // class label
};

struct TerminationRecord {
    int skill_index = 0;
    std::array<double, 5> features{};  // EE displacement from skill start + gripper width
    int label = 1;                     // 1 = skill active, 0 = terminate
};

struct PoseNormalization {
    std::array<double, 7> lo{};
    std::array<double, 7> hi{};

    std::array<double, 7> normalize(const Pose& p) const {
        const auto a = p.to_array();
        std::array<double, 7> out{};
        for (std::size_t i = 0; i < 7; ++i) {
            const double span = hi[i] - lo[i];
            out[i] = span > 1e-12 ? 2.0 * (a[i] - lo[i]) / span - 1.0 : 0.0;
        }
        return out;
    }

    Pose denormalize(const std::array<double, 7>& n) const {
        std::array<double, 7> a{};
        for (std::size_t i = 0; i < 7; ++i) {
            const double span = hi[i] - lo[i];
            a[i] = span > 1e-12 ? lo[i] + (n[i] + 1.0) * span / 2.0 : lo[i];
        }
        // Renormalize the quaternion block after interpolation in coordinates.
        Eigen::Quaterniond q(a[3], a[4], a[5], a[6]);
        if (q.norm() < 1e-9) q = Eigen::Quaterniond::Identity();
        q.normalize();
        return Pose(Eigen::Vector3d(a[0], a[1], a[2]), q);
    }
};

struct TrainingLabels {
    std::vector<std::vector<int>> skill_active;  // per demo, per step (motion first)
    std::vector<InitiationRecord> initiation;
    std::vector<TerminationRecord> termination;
    PoseNormalization normalization;
};

namespace detail {

inline std::array<double, 5> termination_features(const Pose& anchor, const Pose& pose,
                                                  double width) {
    const Pose rel = compose(inverse(anchor), pose);
    const auto [dt, dr] = pose_distance(Pose::identity(), rel);
    (void)dt;
    return {rel.translation.x(), rel.translation.y(), rel.translation.z(), dr, width};
}

inline double width_after(GripperCmd g, double width, double max_width) {
    switch (g) {
        case GripperCmd::open: return max_width;
        case GripperCmd::close: return 0.0;
        case GripperCmd::hold: return width;
    }
    return width;
}

}  // namespace detail

// Builds per-step binary skill-active labels (skill steps 1, motion steps 0
// except the last 50% of each motion segment, which is flipped to 1),
// initiation-target records, and termination training features.
inline TrainingLabels build_training_labels(const std::vector<Demonstration>& demos) {
    if (demos.empty()) throw std::invalid_argument("build_training_labels: empty dataset");
    TrainingLabels out;

    std::array<double, 7> lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());

    for (const auto& demo : demos) {
        demo.validate();
        std::vector<int> labels;
        labels.reserve(demo.step_count());

        // World-frame anchor of each skill segment's first action.
        std::vector<Pose> anchors(demo.skills.size());
        for (std::size_t j = 0; j < demo.skills.size(); ++j)
            anchors[j] = compose(demo.skills[j].object_pose_at_start,
                                 demo.skills[j].actions_object_frame.front().pose);

        double width = demo.initial_state.gripper_width;
        const double max_width = demo.initial_state.gripper_width > 0.0
                                     ? demo.initial_state.gripper_width
                                     : 0.08;
        Pose last_pose_before_skill =
            demo.motions.front().actions_world.empty()
                ? anchors.front()
                : demo.motions.front().actions_world.front().pose;

        for (std::size_t j = 0; j < demo.skills.size(); ++j) {
            const auto& motion = demo.motions[j].actions_world;
            const std::size_t L = motion.size();
            const std::size_t flipped = (L + 1) / 2;  // last ceil(L/2) steps -> 1
            for (std::size_t k = 0; k < L; ++k) {
                const bool active = k >= L - flipped;
                labels.push_back(active ? 1 : 0);
                const Pose& anchor =
                    (k < L - flipped && j > 0) ? anchors[j - 1] : anchors[j];
                out.termination.push_back(
                    {static_cast<int>((k < L - flipped && j > 0) ? j - 1 : j),
                     detail::termination_features(anchor, motion[k].pose, width),
                     active ? 1 : 0});
                width = detail::width_after(motion[k].gripper, width, max_width);
                last_pose_before_skill = motion[k].pose;
            }
            if (L == 0 && j > 0)
                last_pose_before_skill = compose(demo.skills[j - 1].object_pose_at_start,
                                                 demo.skills[j - 1].actions_object_frame.back().pose);

            InitiationRecord rec;
            rec.skill_index = static_cast<int>(j);
            rec.features =
                observation_features(demo.initial_state.object_poses, last_pose_before_skill);
            rec.target_world = compose(demo.skills[j].object_pose_at_start,
                                       demo.skills[j].initiation_object_frame);
            rec.source_index = demo.provenance.source_index;
            const auto t = rec.target_world.to_array();
            for (std::size_t i = 0; i < 7; ++i) {
                lo[i] = std::min(lo[i], t[i]);
                hi[i] = std::max(hi[i], t[i]);
            }
            out.initiation.push_back(std::move(rec));

            for (const auto& a : demo.skills[j].actions_object_frame) {
                labels.push_back(1);
                const Pose world_pose = compose(demo.skills[j].object_pose_at_start, a.pose);
                out.termination.push_back(
                    {static_cast<int>(j),
                     detail::termination_features(anchors[j], world_pose, width), 1});
                width = detail::width_after(a.gripper, width, max_width);
                last_pose_before_skill = world_pose;
            }
        }
        out.skill_active.push_back(std::move(labels));
    }

    out.normalization.lo = lo;
    out.normalization.hi = hi;
    return out;
}

// ---------------------------------------------------------------------------
// Predictor interfaces and reference implementations
// ---------------------------------------------------------------------------

class InitiationPredictor {
public:
    virtual ~InitiationPredictor() = default;
    virtual void begin_episode(Rng&) {}
    virtual Pose predict(const Observation& obs, int skill_index,
                         const std::string& skill_object) const = 0;
};

// HSP-Class: nearest-neighbor classification to a source demonstration index,
// then ground-truth re-adaptation of that source's initiation state. Requires
// current object poses.
class ClassInitiationPredictor : public InitiationPredictor {
public:
    void fit(const TrainingLabels& labels, const std::vector<Demonstration>& dataset) {
        records_ = labels.initiation;
        class_initiations_.clear();
        for (const auto& demo : dataset)
            for (const auto& s : demo.skills) {
                const auto key = std::make_pair(s.skill_index, demo.provenance.source_index);
                class_initiations_.emplace(key, s.initiation_object_frame);
            }
        if (records_.empty()) throw std::invalid_argument("class predictor: no records");
    }

    int classify(const Observation& obs, int skill_index) const {
        const auto f = observation_features(obs.episode_start_object_poses, obs.ee_pose);
        double best = std::numeric_limits<double>::infinity();
        int best_source = -1;
        for (const auto& r : records_) {
            if (r.skill_index != skill_index) continue;
            const double d = feature_distance2(f, r.features);
            if (d < best) {
                best = d;
                best_source = r.source_index;
            }
        }
        if (best_source < 0) throw std::invalid_argument("class predictor: unknown skill index");
        return best_source;
    }

    Pose predict(const Observation& obs, int skill_index,
                 const std::string& skill_object) const override {
        const Pose& object_pose = obs.current_object_pose(skill_object);
        const int source = classify(obs, skill_index);
        auto it = class_initiations_.find({skill_index, source});
        if (it == class_initiations_.end())
            throw std::invalid_argument("class predictor: no initiation for predicted class");
        return compose(object_pose, it->second);
    }

private:
    std::vector<InitiationRecord> records_;
    std::map<std::pair<int, int>, Pose> class_initiations_;  // (skill, source) -> object frame
};

// HSP-Reg: 1-NN regression from non-privileged observation features straight
// to an initiation pose. Targets are stored normalized to [-1, 1] and
// de-normalized on output.
class RegInitiationPredictor : public InitiationPredictor {
public:
    void fit(const TrainingLabels& labels) {
        normalization_ = labels.normalization;
        records_.clear();
        for (const auto& r : labels.initiation)
            records_.push_back({r.skill_index, r.features, normalization_.normalize(r.target_world)});
        if (records_.empty()) throw std::invalid_argument("reg predictor: no records");
    }

    Pose predict(const Observation& obs, int skill_index, const std::string&) const override {
        const auto f = observation_features(obs.episode_start_object_poses, obs.ee_pose);
        double best = std::numeric_limits<double>::infinity();
        const NormalizedRecord* best_rec = nullptr;
        for (const auto& r : records_) {
            if (r.skill_index != skill_index) continue;
            const double d = feature_distance2(f, r.features);
            if (d < best) {
                best = d;
                best_rec = &r;
            }
        }
        if (!best_rec) throw std::invalid_argument("reg predictor: unknown skill index");
        return normalization_.denormalize(best_rec->target);
    }

private:
    struct NormalizedRecord {
        int skill_index;
        std::vector<double> features;
        std::array<double, 7> target;
    };
    std::vector<NormalizedRecord> records_;
    PoseNormalization normalization_;
};

// Oracle (planner-style) initiation: ground-truth adaptation of a source
// initiation state, with the reference episode sampled once per episode.
class OracleInitiationPredictor : public InitiationPredictor {
public:
    void fit(const std::vector<Demonstration>& dataset) {
        choices_.clear();
        initiations_.clear();
        std::set<int> sources;
        for (const auto& demo : dataset) {
            sources.insert(demo.provenance.source_index);
            for (const auto& s : demo.skills)
                initiations_.emplace(std::make_pair(s.skill_index, demo.provenance.source_index),
                                     s.initiation_object_frame);
        }
        choices_.assign(sources.begin(), sources.end());
        if (choices_.empty()) throw std::invalid_argument("oracle predictor: empty dataset");
    }

    void begin_episode(Rng& rng) override {
        episode_choice_ = choices_[rng.uniform_index(choices_.size())];
    }

    Pose predict(const Observation& obs, int skill_index,
                 const std::string& skill_object) const override {
        const Pose& object_pose = obs.current_object_pose(skill_object);
        auto it = initiations_.find({skill_index, episode_choice_});
        if (it == initiations_.end())
            throw std::invalid_argument("oracle predictor: no initiation for episode choice");
        return compose(object_pose, it->second);
    }

private:
    std::vector<int> choices_;
    int episode_choice_ = -1;
    std::map<std::pair<int, int>, Pose> initiations_;
};

class ControlPolicy {
public:
    virtual ~ControlPolicy() = default;
    virtual void begin_episode(Rng&) {}
    virtual void begin_rollout(const Observation& obs, int skill_index,
                               const std::string& skill_object) = 0;
    virtual ActionStep next_action(const Observation& obs) = 0;
};

// Nearest-trajectory replay: pick the training skill segment whose initiation
// context is nearest, then replay its actions relative to the rollout's
// starting EE pose. Uses no object poses at rollout time.
class NearestReplayPolicy : public ControlPolicy {
public:
    void fit(const std::vector<Demonstration>& dataset) {
        library_.clear();
        for (const auto& demo : dataset) {
            for (std::size_t j = 0; j < demo.skills.size(); ++j) {
                const auto& s = demo.skills[j];
                Entry e;
                e.skill_index = s.skill_index;
                const Pose init_world = compose(s.object_pose_at_start, s.initiation_object_frame);
                e.context = observation_features(demo.initial_state.object_poses, init_world);
                const Pose inv = inverse(s.actions_object_frame.front().pose);
                for (const auto& a : s.actions_object_frame)
                    e.relative_actions.push_back({compose(inv, a.pose), a.gripper});
                library_.push_back(std::move(e));
            }
        }
        if (library_.empty()) throw std::invalid_argument("replay policy: empty dataset");
    }

    void begin_rollout(const Observation& obs, int skill_index, const std::string&) override {
        const auto f = observation_features(obs.episode_start_object_poses, obs.ee_pose);
        double best = std::numeric_limits<double>::infinity();
        active_ = nullptr;
        for (const auto& e : library_) {
            if (e.skill_index != skill_index) continue;
            const double d = feature_distance2(f, e.context);
            if (d < best) {
                best = d;
                active_ = &e;
            }
        }
        if (!active_) throw std::invalid_argument("replay policy: unknown skill index");
        anchor_ = obs.ee_pose;
        cursor_ = 0;
    }

    ActionStep next_action(const Observation&) override {
        const auto& actions = active_->relative_actions;
        const std::size_t i = std::min(cursor_, actions.size() - 1);
        if (cursor_ < actions.size()) ++cursor_;
        return {compose(anchor_, actions[i].pose), actions[i].gripper};
    }

private:
    struct Entry {
        int skill_index = 0;
        std::vector<double> context;
        std::vector<ActionStep> relative_actions;
    };
    std::vector<Entry> library_;
    const Entry* active_ = nullptr;
    Pose anchor_;
    std::size_t cursor_ = 0;
};

// Oracle replay: re-anchors the nearest training segment to the ground-truth
// object pose at rollout start (the generation-time adaptation rule).
class OracleReplayPolicy : public ControlPolicy {
public:
    void fit(const std::vector<Demonstration>& dataset) {
        library_.clear();
        for (const auto& demo : dataset)
            for (const auto& s : demo.skills)
                library_.push_back({s.skill_index, s.object_pose_at_start.to_array(),
                                    s.actions_object_frame});
        if (library_.empty()) throw std::invalid_argument("oracle policy: empty dataset");
    }

    void begin_rollout(const Observation& obs, int skill_index,
                       const std::string& skill_object) override {
        const Pose object_pose = obs.current_object_pose(skill_object);
        const auto key = object_pose.to_array();
        double best = std::numeric_limits<double>::infinity();
        const Entry* chosen = nullptr;
        for (const auto& e : library_) {
            if (e.skill_index != skill_index) continue;
            double d = 0.0;
            for (std::size_t i = 0; i < 7; ++i)
                d += (key[i] - e.object_pose[i]) * (key[i] - e.object_pose[i]);
            if (d < best) {
                best = d;
                chosen = &e;
            }
        }
        if (!chosen) throw std::invalid_argument("oracle policy: unknown skill index");
        actions_.clear();
        for (const auto& a : chosen->actions)
            actions_.push_back({compose(object_pose, a.pose), a.gripper});
        cursor_ = 0;
    }

    ActionStep next_action(const Observation&) override {
        const std::size_t i = std::min(cursor_, actions_.size() - 1);
        if (cursor_ < actions_.size()) ++cursor_;
        return actions_[i];
    }

private:
    struct Entry {
        int skill_index = 0;
        std::array<double, 7> object_pose;
        std::vector<ActionStep> actions;
    };
    std::vector<Entry> library_;
    std::vector<ActionStep> actions_;
    std::size_t cursor_ = 0;
};

class TerminationPredictor {
public:
    virtual ~TerminationPredictor() = default;
    virtual void begin_rollout(const Observation& obs, int skill_index,
                               const std::string& skill_object) = 0;
    // One per-tick vote; termination is accepted after required_votes()
    // consecutive positive votes.
    virtual bool vote(const Observation& obs) = 0;
    virtual int required_votes() const = 0;
};

// Oracle termination: fires as soon as the EE is within (pos_tol, rot_tol) of
// the stored termination state in the skill object's frame.
class OracleTerminationPredictor : public TerminationPredictor {
public:
    double pos_tol = 0.02;
    double rot_tol = 10.0 * 3.14159265358979323846 / 180.0;

    void fit(const std::vector<Demonstration>& dataset) {
        library_.clear();
        for (const auto& demo : dataset)
            for (const auto& s : demo.skills)
                library_.push_back(
                    {s.skill_index, s.object_pose_at_start.to_array(), s.termination_object_frame});
        if (library_.empty()) throw std::invalid_argument("oracle termination: empty dataset");
    }

    void begin_rollout(const Observation& obs, int skill_index,
                       const std::string& skill_object) override {
        object_ = skill_object;
        const auto key = obs.current_object_pose(skill_object).to_array();
        double best = std::numeric_limits<double>::infinity();
        const Entry* chosen = nullptr;
        for (const auto& e : library_) {
            if (e.skill_index != skill_index) continue;
            double d = 0.0;
            for (std::size_t i = 0; i < 7; ++i)
                d += (key[i] - e.object_pose[i]) * (key[i] - e.object_pose[i]);
            if (d < best) {
                best = d;
                chosen = &e;
            }
        }
        if (!chosen) throw std::invalid_argument("oracle termination: unknown skill index");
        termination_object_frame_ = chosen->termination;
    }

    bool vote(const Observation& obs) override {
        const Pose ee_in_object = compose(inverse(obs.current_object_pose(object_)), obs.ee_pose);
        const auto [dt, dr] = pose_distance(ee_in_object, termination_object_frame_);
        return dt <= pos_tol && dr <= rot_tol;
    }

    int required_votes() const override { return 1; }

private:
    struct Entry {
        int skill_index = 0;
        std::array<double, 7> object_pose;
        Pose termination;
    };
    std::vector<Entry> library_;
    std::string object_;
    Pose termination_object_frame_;
};

// Learned-threshold termination: k-NN majority (k=5) over
// EE-displacement-from-skill-start features, voting to terminate where the
// training labels say the skill is no longer active. 5 consecutive votes are
// required. Majority voting matters at the segment end, where the hold pose
// sits between the last skill-active sample and the first post-skill samples.
class ThresholdTerminationPredictor : public TerminationPredictor {
public:
    int k = 5;

    void fit(const TrainingLabels& labels) {
        records_ = labels.termination;
        if (records_.empty()) throw std::invalid_argument("threshold termination: no records");
    }

    void begin_rollout(const Observation& obs, int skill_index, const std::string&) override {
        anchor_ = obs.ee_pose;
        skill_index_ = skill_index;
    }

    bool vote(const Observation& obs) override {
        const auto f = detail::termination_features(anchor_, obs.ee_pose, obs.gripper_width);
        // (distance, label) of the k nearest same-skill records.
        std::vector<std::pair<double, int>> best;
        for (const auto& r : records_) {
            if (r.skill_index != skill_index_) continue;
            double d = 0.0;
            for (std::size_t i = 0; i < 5; ++i) d += (f[i] - r.features[i]) * (f[i] - r.features[i]);
            if (best.size() < static_cast<std::size_t>(k)) {
                best.emplace_back(d, r.label);
                std::push_heap(best.begin(), best.end());
            } else if (d < best.front().first) {
                std::pop_heap(best.begin(), best.end());
                best.back() = {d, r.label};
                std::push_heap(best.begin(), best.end());
            }
        }
        if (best.empty()) return false;
        int inactive = 0;
        for (const auto& [d, label] : best)
            if (label == 0) ++inactive;
        return 2 * inactive > static_cast<int>(best.size());
    }

    int required_votes() const override { return 5; }

private:
    std::vector<TerminationRecord> records_;
    Pose anchor_;
    int skill_index_ = 0;
};

struct Skill {
    std::string object;
    std::shared_ptr<InitiationPredictor> initiation;
    std::shared_ptr<ControlPolicy> policy;
    std::shared_ptr<TerminationPredictor> termination;
};

// ---------------------------------------------------------------------------
// Rollout and deployment
// ---------------------------------------------------------------------------

struct RolloutResult {
    WorldState state;
    std::vector<ControlStep> steps;
    bool terminated = false;
    bool collision_abort = false;
};

// Runs the policy until the termination predictor accumulates the required
// consecutive votes, the horizon runs out, or (when success_task is given,
// i.e. for the final skill) the task success predicate fires.
inline RolloutResult replay_policy_rollout(const World& world, const WorldState& start,
                                           ControlPolicy& policy, TerminationPredictor& term,
                                           int horizon,
                                           const std::map<std::string, Pose>& episode_start,
                                           ObservationMode mode, const IgnoreSet& ignore = {},
                                           const TaskSpec* success_task = nullptr) {
    RolloutResult out;
    out.state = start;
    int streak = 0;
    for (int t = 0; t < horizon; ++t) {
        const Observation obs = observe(world, out.state, episode_start, mode);
        if (term.vote(obs)) {
            if (++streak >= term.required_votes()) {
                out.terminated = true;
                return out;
            }
        } else {
            streak = 0;
        }
        const ActionStep a = policy.next_action(obs);
        out.state = step_task_space(world, out.state, a.pose, a.gripper);
        out.steps.push_back(
            {a.pose, a.gripper, forward_kinematics(world.robot, out.state.q)});
        if (check_collision(world, out.state, ignore)) {
            out.collision_abort = true;
            return out;
        }
        if (success_task && check_success(*success_task, out.state)) {
            out.terminated = true;
            return out;
        }
    }
    return out;
}

enum class StitchMode { plan, interp };

struct DeployOptions {
    std::string variant = "D0";
    int episodes = 0;
    std::uint64_t seed = 0;
    ObservationMode mode = ObservationMode::privileged;
    StitchMode stitch = StitchMode::plan;
    int interp_steps = 5;
    int skill_horizon = 400;
};

struct DeploymentReport {
    int episodes = 0;
    int successes = 0;
    std::map<FailureCause, int> failures;  // cause of each failed episode
    std::vector<Demonstration> traces;     // completed episodes, success flag set

    double success_rate() const {
        return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0;
    }
};

// Alg-2-style deployment: per episode, for each skill observe, predict the
// initiation pose, plan (or blindly interpolate) to it, then roll the policy
// until termination; the episode succeeds iff the final state satisfies the
// task predicate. Any stage failure ends the episode with a recorded cause.
inline DeploymentReport deploy(const TaskSpec& task, const std::vector<Skill>& skills,
                               const DeployOptions& opt) {
    if (skills.size() != task.skill_plan.size())
        throw ConfigError("deploy: skill list does not match the task skill plan");
    DeploymentReport report;
    report.episodes = opt.episodes;

    for (int ep = 0; ep < opt.episodes; ++ep) {
        Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(ep)));
        const ResetResult rr = reset_with_obstacles(task, opt.variant, rng);
        const World world = world_for_reset(task, rr);
        WorldState state = rr.state;
        const std::map<std::string, Pose> episode_start = state.object_poses;

        std::set<const void*> seen;
        for (const auto& s : skills) {
            if (seen.insert(s.initiation.get()).second) s.initiation->begin_episode(rng);
            if (seen.insert(s.policy.get()).second) s.policy->begin_episode(rng);
        }

        detail::EpisodeLog log;
        std::vector<std::string> manipulated;
        FailureCause episode_failure = FailureCause::none;

        for (std::size_t i = 0; i < skills.size() && episode_failure == FailureCause::none; ++i) {
            const Skill& skill = skills[i];
            const Pose object_pose_at_start = state.object_poses.at(skill.object);
            Observation obs = observe(world, state, episode_start, opt.mode);
            // ObservabilityError from predict propagates: a predictor asking
            // for unavailable observations is a configuration problem.
            const Pose initiation =
                skill.initiation->predict(obs, static_cast<int>(i), skill.object);

            if (opt.stitch == StitchMode::plan) {
                ThreePhaseOptions popt;
                popt.skill_object = skill.object;
                popt.manipulated_objects = manipulated;
                auto planned = plan_three_phase(world, state, initiation, popt, rng);
                if (!planned.plan) {
                    episode_failure = planned.failure;
                    break;
                }
                auto executed = execute_plan(world, state, *planned.plan);
                if (!executed) {
                    episode_failure = FailureCause::execution_failure;
                    break;
                }
                state = std::move(executed->state);
                log.raw.insert(log.raw.end(), executed->steps.begin(), executed->steps.end());
            } else {
                const Pose start_ee = forward_kinematics(world.robot, state.q);
                bool aborted = false;
                for (int k = 1; k <= opt.interp_steps; ++k) {
                    const Pose target =
                        interpolate(start_ee, initiation, static_cast<double>(k) / opt.interp_steps);
                    state = step_task_space(world, state, target, GripperCmd::hold);
                    if (check_collision(world, state,
                                        detail::skill_ignore_set(skill.object, state.attachment,
                                                                 manipulated))) {
                        aborted = true;
                        break;
                    }
                    log.raw.push_back(
                        {target, GripperCmd::hold, forward_kinematics(world.robot, state.q)});
                }
                if (aborted) {
                    episode_failure = FailureCause::execution_failure;
                    break;
                }
            }

            const std::size_t skill_begin = log.raw.size();
            obs = observe(world, state, episode_start, opt.mode);
            skill.policy->begin_rollout(obs, static_cast<int>(i), skill.object);
            skill.termination->begin_rollout(obs, static_cast<int>(i), skill.object);
            const bool final_skill = i + 1 == skills.size();
            RolloutResult roll = replay_policy_rollout(
                world, state, *skill.policy, *skill.termination, opt.skill_horizon, episode_start,
                opt.mode, detail::skill_ignore_set(skill.object, state.attachment, manipulated),
                final_skill ? &task : nullptr);
            state = std::move(roll.state);
            log.raw.insert(log.raw.end(), roll.steps.begin(), roll.steps.end());
            if (roll.collision_abort) {
                episode_failure = FailureCause::execution_failure;
                break;
            }
            if (!roll.terminated) {
                episode_failure = FailureCause::skill_timeout;
                break;
            }
            if (log.raw.size() == skill_begin) {
                // Zero policy steps: stretch the boundary over a one-tick hold
                // so the trace keeps a nonempty skill segment.
                state = step_task_space(world, state, forward_kinematics(world.robot, state.q),
                                        GripperCmd::hold);
                log.raw.push_back({forward_kinematics(world.robot, state.q), GripperCmd::hold,
                                   forward_kinematics(world.robot, state.q)});
            }
            log.boundaries.push_back({skill_begin, log.raw.size()});
            log.assignments.push_back({skill.object, object_pose_at_start});
            manipulated.push_back(skill.object);
            if (state.attachment &&
                std::find(manipulated.begin(), manipulated.end(), state.attachment->object) ==
                    manipulated.end())
                manipulated.push_back(state.attachment->object);
        }

        if (episode_failure != FailureCause::none) {
            ++report.failures[episode_failure];
            continue;
        }

        const bool success = check_success(task, state);
        if (success) ++report.successes;
        else ++report.failures[FailureCause::task_failure];

        DemoMeta meta;
        meta.task_name = task.name;
        meta.variant = opt.variant;
        meta.initial_state = rr.state;
        meta.obstacle_poses = rr.obstacle_poses;
        meta.success = success;
        meta.provenance = {Provenance::Kind::generated, -1,
                           derive_seed(opt.seed, static_cast<std::uint64_t>(ep))};
        report.traces.push_back(
            annotate_segments(log.raw, log.boundaries, log.assignments, meta));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Skill assembly and predictor sidecar
// ---------------------------------------------------------------------------

enum class HspVariant { hsp_class, hsp_reg, oracle };

inline const char* hsp_variant_name(HspVariant v) {
    switch (v) {
        case HspVariant::hsp_class: return "class";
        case HspVariant::hsp_reg: return "reg";
        case HspVariant::oracle: return "oracle";
    }
    return "?";
}

struct HspPolicyBundle {
    std::vector<Skill> skills;
    ObservationMode mode = ObservationMode::privileged;
};

// Builds the per-variant skill list from a generated dataset. Components are
// shared across skills (one predictor of each type, as in the reference
// training setup).
inline HspPolicyBundle make_hsp_skills(const TaskSpec& task,
                                       const std::vector<Demonstration>& dataset,
                                       const TrainingLabels& labels, HspVariant variant,
                                       bool oracle_termination = false) {
    HspPolicyBundle out;
    std::shared_ptr<InitiationPredictor> initiation;
    std::shared_ptr<ControlPolicy> policy;
    std::shared_ptr<TerminationPredictor> termination;

    if (variant == HspVariant::hsp_class) {
        auto p = std::make_shared<ClassInitiationPredictor>();
        p->fit(labels, dataset);
        initiation = p;
        auto pol = std::make_shared<NearestReplayPolicy>();
        pol->fit(dataset);
        policy = pol;
        out.mode = ObservationMode::privileged;
    } else if (variant == HspVariant::hsp_reg) {
        auto p = std::make_shared<RegInitiationPredictor>();
        p->fit(labels);
        initiation = p;
        auto pol = std::make_shared<NearestReplayPolicy>();
        pol->fit(dataset);
        policy = pol;
        out.mode = ObservationMode::reduced;
    } else {
        auto p = std::make_shared<OracleInitiationPredictor>();
        p->fit(dataset);
        initiation = p;
        auto pol = std::make_shared<OracleReplayPolicy>();
        pol->fit(dataset);
        policy = pol;
        out.mode = ObservationMode::privileged;
    }

    if (variant == HspVariant::oracle || oracle_termination) {
        auto t = std::make_shared<OracleTerminationPredictor>();
        t->fit(dataset);
        termination = t;
        out.mode = ObservationMode::privileged;
    } else {
        auto t = std::make_shared<ThresholdTerminationPredictor>();
        t->fit(labels);
        termination = t;
    }

    for (const auto& step : task.skill_plan)
        out.skills.push_back({step.object, initiation, policy, termination});
    return out;
}

// Sidecar: the nearest-neighbor training sets plus normalization constants.
inline void save_predictor_state(const TrainingLabels& labels, const std::string& path) {
    nlohmann::json j;
    j["schema"] = "skillgen.predictors";
    j["version"] = 1;
    j["normalization"] = {{"lo", labels.normalization.lo}, {"hi", labels.normalization.hi}};
    j["skill_active"] = labels.skill_active;
    auto& init = j["initiation"] = nlohmann::json::array();
    for (const auto& r : labels.initiation)
        init.push_back({{"skill", r.skill_index},
                        {"features", r.features},
                        {"target", r.target_world.to_array()},
                        {"source", r.source_index}});
    auto& term = j["termination"] = nlohmann::json::array();
    for (const auto& r : labels.termination)
        term.push_back({{"skill", r.skill_index}, {"features", r.features}, {"label", r.label}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_predictor_state: cannot open " + path);
    out << j.dump() << "\n";
}

inline TrainingLabels load_predictor_state(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_predictor_state: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("schema", std::string()) != "skillgen.predictors")
        throw ParseError(path + ": not a predictor sidecar file");
    TrainingLabels labels;
    labels.normalization.lo = j.at("normalization").at("lo").get<std::array<double, 7>>();
    labels.normalization.hi = j.at("normalization").at("hi").get<std::array<double, 7>>();
    labels.skill_active = j.at("skill_active").get<std::vector<std::vector<int>>>();
    for (const auto& r : j.at("initiation")) {
        InitiationRecord rec;
        rec.skill_index = r.at("skill").get<int>();
        rec.features = r.at("features").get<std::vector<double>>();
        rec.target_world = Pose::from_array(r.at("target").get<std::array<double, 7>>());
        rec.source_index = r.at("source").get<int>();
        labels.initiation.push_back(std::move(rec));
    }
    for (const auto& r : j.at("termination")) {
        TerminationRecord rec;
        rec.skill_index = r.at("skill").get<int>();
        rec.features = r.at("features").get<std::array<double, 5>>();
        rec.label = r.at("label").get<int>();
        labels.termination.push_back(rec);
    }
    return labels;
}

}  // namespace skillgen
