#pragma once

// Demonstration data model and persistence. A demonstration is a strict
// alternation of motion and skill segments (motion first, skill last); skill
// actions are stored in the manipulated object's frame so they can be
// re-anchored to new object poses. Datasets are newline-delimited JSON with a
// schema-version header carrying the generation statistics.

#include "skillgen/planner.hpp"
#include "skillgen/task.hpp"
#include "skillgen/world.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace skillgen {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ActionStep {
    Pose pose;
    GripperCmd gripper = GripperCmd::hold;
};

struct MotionSegment {
    std::vector<ActionStep> actions_world;
};

struct SkillSegmentRecord {
    int skill_index = 0;
    std::string object;
    Pose object_pose_at_start;                   // T of the object in the world at segment start
    std::vector<ActionStep> actions_object_frame;
    Pose initiation_object_frame;                // first action pose, object frame
    Pose termination_object_frame;               // last action pose, object frame
    int recovery_steps = 0;                      // leading actions that are recovery motion
};

struct Provenance {
    enum class Kind { human, generated };
    Kind kind = Kind::human;
    int source_index = -1;
    std::uint64_t attempt_seed = 0;
};

struct Demonstration {
    std::string task_name;
    std::string variant;
    WorldState initial_state;
    std::map<std::string, Pose> obstacle_poses;  // variant-sampled scene furniture
    std::vector<MotionSegment> motions;          // motions[i] precedes skills[i]
    std::vector<SkillSegmentRecord> skills;
    bool success = false;
    Provenance provenance;

    std::size_t step_count() const {
        std::size_t n = 0;
        for (const auto& m : motions) n += m.actions_world.size();
        for (const auto& s : skills) n += s.actions_object_frame.size();
        return n;
    }

    void validate() const {
        if (motions.size() != skills.size())
            throw std::invalid_argument("demo: motion/skill alternation broken");
        for (const auto& m : motions)
            for (const auto& a : m.actions_world)
                if (a.gripper != GripperCmd::hold)
                    throw std::invalid_argument("demo: gripper toggled inside a motion segment");
        for (const auto& s : skills) {
            if (s.actions_object_frame.empty())
                throw std::invalid_argument("demo: empty skill segment");
            if (!approx_equal(s.initiation_object_frame, s.actions_object_frame.front().pose,
                              1e-9) ||
                !approx_equal(s.termination_object_frame, s.actions_object_frame.back().pose,
                              1e-9))
                throw std::invalid_argument("demo: initiation/termination out of sync");
            if (s.recovery_steps < 0 ||
                s.recovery_steps > static_cast<int>(s.actions_object_frame.size()))
                throw std::invalid_argument("demo: bad recovery step count");
        }
    }
};

// Re-expresses a recorded world-frame span in the object's frame. The first
// and last action poses define the initiation and termination states.
inline SkillSegmentRecord to_object_frame(std::span<const ControlStep> steps,
                                          const Pose& object_pose, int skill_index,
                                          const std::string& object) {
    if (steps.empty()) throw std::invalid_argument("to_object_frame: empty segment");
    SkillSegmentRecord rec;
    rec.skill_index = skill_index;
    rec.object = object;
    rec.object_pose_at_start = object_pose;
    const Pose inv = inverse(object_pose);
    rec.actions_object_frame.reserve(steps.size());
    for (const auto& s : steps)
        rec.actions_object_frame.push_back({compose(inv, s.action), s.gripper});
    rec.initiation_object_frame = rec.actions_object_frame.front().pose;
    rec.termination_object_frame = rec.actions_object_frame.back().pose;
    return rec;
}

struct SkillAssignment {
    std::string object;
    Pose object_pose_at_start;
};

struct DemoMeta {
    std::string task_name;
    std::string variant;
    WorldState initial_state;
    std::map<std::string, Pose> obstacle_poses;
    bool success = false;
    Provenance provenance;
};

// Splits a flat recorded trajectory at the given [begin, end) skill
// boundaries; the gaps become motion segments. Boundaries must be sorted,
// non-overlapping, non-empty, and must consume the trajectory tail (a
// demonstration ends with a skill segment).
inline Demonstration annotate_segments(const std::vector<ControlStep>& raw,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& boundaries,
                                       const std::vector<SkillAssignment>& objects,
                                       const DemoMeta& meta) {
    if (boundaries.size() != objects.size())
        throw std::invalid_argument("annotate: one object assignment per skill segment required");
    if (boundaries.empty()) throw std::invalid_argument("annotate: no skill boundaries");
    std::size_t cursor = 0;
    for (const auto& [b, e] : boundaries) {
        if (b < cursor || e <= b || e > raw.size())
            throw std::invalid_argument("annotate: boundaries unordered, overlapping or out of range");
        cursor = e;
    }
    if (cursor != raw.size())
        throw std::invalid_argument("annotate: trajectory tail not covered by a skill segment");

    Demonstration demo;
    demo.task_name = meta.task_name;
    demo.variant = meta.variant;
    demo.initial_state = meta.initial_state;
    demo.obstacle_poses = meta.obstacle_poses;
    demo.success = meta.success;
    demo.provenance = meta.provenance;

    std::size_t pos = 0;
    for (std::size_t i = 0; i < boundaries.size(); ++i) {
        const auto [b, e] = boundaries[i];
        MotionSegment motion;
        for (std::size_t k = pos; k < b; ++k)
            motion.actions_world.push_back({raw[k].action, GripperCmd::hold});
        demo.motions.push_back(std::move(motion));
        demo.skills.push_back(to_object_frame(std::span(raw).subspan(b, e - b),
                                              objects[i].object_pose_at_start,
                                              static_cast<int>(i), objects[i].object));
        pos = e;
    }
    demo.validate();
    return demo;
}

struct DatasetStats {
    int attempts = 0;
    int successes = 0;
    // failed skill index (-1 = episode-level, e.g. final task check) -> cause -> count
    std::map<int, std::map<FailureCause, int>> failures;

    double generation_rate() const {
        return attempts > 0 ? static_cast<double>(successes) / attempts : 0.0;
    }

    int failure_total() const {
        int n = 0;
        for (const auto& [skill, causes] : failures)
            for (const auto& [cause, count] : causes) n += count;
        return n;
    }

    int failures_by_cause(FailureCause c) const {
        int n = 0;
        for (const auto& [skill, causes] : failures) {
            auto it = causes.find(c);
            if (it != causes.end()) n += it->second;
        }
        return n;
    }

    void validate() const {
        if (successes + failure_total() != attempts)
            throw std::logic_error("stats: failure causes do not sum to attempts - successes");
    }
};

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

namespace io {

using nlohmann::json;

inline json pose_to_json(const Pose& p) { return json(p.to_array()); }

inline Pose pose_from_json(const json& j) {
    if (!j.is_array() || j.size() != 7) throw ParseError("pose must be a 7-element array");
    std::array<double, 7> a{};
    for (std::size_t i = 0; i < 7; ++i) a[i] = j[i].get<double>();
    return Pose::from_array(a);
}

inline const char* gripper_to_string(GripperCmd g) {
    switch (g) {
        case GripperCmd::open: return "open";
        case GripperCmd::close: return "close";
        case GripperCmd::hold: return "hold";
    }
    return "hold";
}

inline GripperCmd gripper_from_string(const std::string& s) {
    if (s == "open") return GripperCmd::open;
    if (s == "close") return GripperCmd::close;
    if (s == "hold") return GripperCmd::hold;
    throw ParseError("unknown gripper command: " + s);
}

inline json actions_to_json(const std::vector<ActionStep>& actions) {
    json arr = json::array();
    for (const auto& a : actions)
        arr.push_back(json{{"pose", pose_to_json(a.pose)}, {"g", gripper_to_string(a.gripper)}});
    return arr;
}

inline std::vector<ActionStep> actions_from_json(const json& j) {
    std::vector<ActionStep> out;
    for (const auto& a : j)
        out.push_back({pose_from_json(a.at("pose")), gripper_from_string(a.at("g"))});
    return out;
}

inline json state_to_json(const WorldState& s) {
    json objs = json::object();
    for (const auto& [name, pose] : s.object_poses) objs[name] = pose_to_json(pose);
    json j{{"q", std::vector<double>(s.q.data(), s.q.data() + s.q.size())},
           {"gripper_width", s.gripper_width},
           {"objects", objs},
           {"variant", s.variant}};
    if (s.attachment)
        j["attachment"] = json{{"object", s.attachment->object},
                               {"grasp_transform", pose_to_json(s.attachment->grasp_transform)}};
    return j;
}

inline WorldState state_from_json(const json& j) {
    WorldState s;
    const auto& q = j.at("q");
    s.q = Eigen::VectorXd(q.size());
    for (std::size_t i = 0; i < q.size(); ++i)
        s.q[static_cast<Eigen::Index>(i)] = q[i].get<double>();
    s.gripper_width = j.at("gripper_width").get<double>();
    for (const auto& [name, pose] : j.at("objects").items())
        s.object_poses[name] = pose_from_json(pose);
    s.variant = j.value("variant", std::string());
    if (j.contains("attachment") && !j.at("attachment").is_null())
        s.attachment = Attachment{j.at("attachment").at("object").get<std::string>(),
                                  pose_from_json(j.at("attachment").at("grasp_transform"))};
    return s;
}

inline json demo_to_json(const Demonstration& d) {
    json segments = json::array();
    for (std::size_t i = 0; i < d.skills.size(); ++i) {
        segments.push_back(
            json{{"type", "motion"}, {"actions", actions_to_json(d.motions[i].actions_world)}});
        const auto& s = d.skills[i];
        segments.push_back(json{{"type", "skill"},
                                {"skill_index", s.skill_index},
                                {"object", s.object},
                                {"object_pose", pose_to_json(s.object_pose_at_start)},
                                {"initiation", pose_to_json(s.initiation_object_frame)},
                                {"termination", pose_to_json(s.termination_object_frame)},
                                {"recovery_steps", s.recovery_steps},
                                {"actions", actions_to_json(s.actions_object_frame)}});
    }
    json obstacles = json::object();
    for (const auto& [name, pose] : d.obstacle_poses) obstacles[name] = pose_to_json(pose);
    return json{{"task", d.task_name},
                {"variant", d.variant},
                {"success", d.success},
                {"provenance",
                 json{{"kind", d.provenance.kind == Provenance::Kind::human ? "human" : "generated"},
                      {"source_index", d.provenance.source_index},
                      {"attempt_seed", d.provenance.attempt_seed}}},
                {"initial_state", state_to_json(d.initial_state)},
                {"obstacle_poses", obstacles},
                {"segments", segments}};
}

inline Demonstration demo_from_json(const json& j) {
    Demonstration d;
    d.task_name = j.at("task").get<std::string>();
    d.variant = j.at("variant").get<std::string>();
    d.success = j.at("success").get<bool>();
    const auto& prov = j.at("provenance");
    d.provenance.kind = prov.at("kind").get<std::string>() == "human"
                            ? Provenance::Kind::human
                            : Provenance::Kind::generated;
    d.provenance.source_index = prov.at("source_index").get<int>();
    d.provenance.attempt_seed = prov.at("attempt_seed").get<std::uint64_t>();
    d.initial_state = state_from_json(j.at("initial_state"));
    for (const auto& [name, pose] : j.at("obstacle_poses").items())
        d.obstacle_poses[name] = pose_from_json(pose);
    const auto& segments = j.at("segments");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& seg = segments[i];
        const std::string type = seg.at("type").get<std::string>();
        if (type == "motion") {
            if (i % 2 != 0) throw ParseError("motion segment at odd position");
            d.motions.push_back({actions_from_json(seg.at("actions"))});
        } else if (type == "skill") {
            if (i % 2 != 1) throw ParseError("skill segment at even position");
            SkillSegmentRecord s;
            s.skill_index = seg.at("skill_index").get<int>();
            s.object = seg.at("object").get<std::string>();
            s.object_pose_at_start = pose_from_json(seg.at("object_pose"));
            s.initiation_object_frame = pose_from_json(seg.at("initiation"));
            s.termination_object_frame = pose_from_json(seg.at("termination"));
            s.recovery_steps = seg.value("recovery_steps", 0);
            s.actions_object_frame = actions_from_json(seg.at("actions"));
            d.skills.push_back(std::move(s));
        } else {
            throw ParseError("unknown segment type: " + type);
        }
    }
    d.validate();
    return d;
}

inline json stats_to_json(const DatasetStats& s) {
    json fails = json::object();
    for (const auto& [skill, causes] : s.failures) {
        json by_cause = json::object();
        for (const auto& [cause, count] : causes) by_cause[failure_name(cause)] = count;
        fails[std::to_string(skill)] = by_cause;
    }
    return json{{"attempts", s.attempts}, {"successes", s.successes}, {"failures", fails}};
}

inline FailureCause failure_from_string(const std::string& s) {
    for (FailureCause c : {FailureCause::ik_unreachable, FailureCause::plan_failure,
                           FailureCause::execution_failure, FailureCause::task_failure,
                           FailureCause::skill_timeout})
        if (s == failure_name(c)) return c;
    throw ParseError("unknown failure cause: " + s);
}

inline DatasetStats stats_from_json(const json& j) {
    DatasetStats s;
    s.attempts = j.at("attempts").get<int>();
    s.successes = j.at("successes").get<int>();
    for (const auto& [skill, causes] : j.at("failures").items())
        for (const auto& [cause, count] : causes.items())
            s.failures[std::stoi(skill)][failure_from_string(cause)] = count.get<int>();
    s.validate();
    return s;
}

}  // namespace io

inline constexpr const char* kDatasetSchema = "skillgen.dataset";
inline constexpr int kDatasetVersion = 1;

inline void save_dataset(const std::vector<Demonstration>& demos, const DatasetStats& stats,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    nlohmann::json header{{"schema", kDatasetSchema},
                          {"version", kDatasetVersion},
                          {"count", demos.size()},
                          {"stats", io::stats_to_json(stats)}};
    out << header.dump() << "\n";
    for (const auto& d : demos) out << io::demo_to_json(d).dump() << "\n";
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline std::pair<std::vector<Demonstration>, DatasetStats> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": " + msg);
    };

    std::vector<Demonstration> demos;
    DatasetStats stats;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail(std::string("invalid JSON: ") + e.what());
        }
        try {
            if (!have_header) {
                if (j.value("schema", std::string()) != kDatasetSchema)
                    fail("missing or wrong schema header");
                if (j.at("version").get<int>() != kDatasetVersion)
                    fail("unsupported dataset version");
                stats = io::stats_from_json(j.at("stats"));
                have_header = true;
            } else {
                demos.push_back(io::demo_from_json(j));
            }
        } catch (const ParseError& e) {
            fail(e.what());
        } catch (const nlohmann::json::exception& e) {
            fail(std::string("record error: ") + e.what());
        } catch (const std::invalid_argument& e) {
            fail(std::string("record error: ") + e.what());
        }
    }
    if (!have_header) {
        line_no = 0;
        fail("empty dataset file (no header)");
    }
    return {std::move(demos), stats};
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct ReplayResult {
    WorldState final_state;
    bool success = false;
    std::vector<std::vector<Pose>> skill_ee_traces;  // achieved EE pose per skill step
};

// Re-executes a recorded demonstration from its initial state through the
// task-space controller. Skill actions are re-anchored from the recorded
// object pose, so a replay in the recorded initial state is exact up to
// controller tracking error.
inline ReplayResult replay_demonstration(const TaskSpec& task, const Demonstration& demo) {
    World world = task.world;
    for (auto& ob : world.obstacles) {
        auto it = demo.obstacle_poses.find(ob.name);
        if (it != demo.obstacle_poses.end()) ob.pose = it->second;
    }
    ReplayResult out;
    WorldState state = demo.initial_state;
    for (std::size_t i = 0; i < demo.skills.size(); ++i) {
        for (const auto& a : demo.motions[i].actions_world)
            state = step_task_space(world, state, a.pose, a.gripper);
        const auto& skill = demo.skills[i];
        std::vector<Pose> trace;
        trace.reserve(skill.actions_object_frame.size());
        for (const auto& a : skill.actions_object_frame) {
            const Pose target = compose(skill.object_pose_at_start, a.pose);
            state = step_task_space(world, state, target, a.gripper);
            trace.push_back(forward_kinematics(world.robot, state.q));
        }
        out.skill_ee_traces.push_back(std::move(trace));
    }
    out.success = check_success(task, state);
    out.final_state = std::move(state);
    return out;
}

}  // namespace skillgen
