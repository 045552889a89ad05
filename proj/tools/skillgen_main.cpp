// skillgen command-line surface: scripted source recording, dataset
// generation (skillgen + baseline modes), HSP deployment, dataset statistics,
// and replay validation. All commands are deterministic given --seed.
// Exit codes: 0 success, 1 usage, 2 task/config error, 3 generation shortfall.

#include "skillgen/datagen.hpp"
#include "skillgen/demos.hpp"
#include "skillgen/expert.hpp"
#include "skillgen/hsp.hpp"
#include "skillgen/task_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

namespace {

enum class LogLevel { silent = 0, info = 1, debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("SKILLGEN_LOG");
    if (!env) return LogLevel::info;
    const std::string v(env);
    if (v == "silent" || v == "0") return LogLevel::silent;
    if (v == "debug" || v == "2") return LogLevel::debug;
    return LogLevel::info;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::fprintf(stderr, "[skillgen] %s\n", msg.c_str());
}

skillgen::GenerationMode parse_mode(std::string m) {
    for (auto& c : m)
        if (c == '-') c = '_';
    if (m == "skillgen") return skillgen::GenerationMode::skillgen;
    if (m == "mimicgen_interp") return skillgen::GenerationMode::mimicgen_interp;
    if (m == "replay_noise") return skillgen::GenerationMode::replay_noise;
    throw skillgen::ConfigError("unknown generation mode: " + m);
}

std::string stats_summary(const skillgen::DatasetStats& stats) {
    std::string out = "attempts=" + std::to_string(stats.attempts) +
                      " successes=" + std::to_string(stats.successes) +
                      " generation_rate=" + std::to_string(stats.generation_rate());
    for (const auto& [skill, causes] : stats.failures)
        for (const auto& [cause, count] : causes)
            out += "\n  skill " + std::to_string(skill) + " " +
                   skillgen::failure_name(cause) + ": " + std::to_string(count);
    return out;
}

int cmd_record(const std::string& task_path, const std::string& variant, int n,
               std::uint64_t seed, const std::string& out_path,
               const std::string& script_path) {
    skillgen::TaskSpec task = skillgen::load_task(task_path);
    if (!script_path.empty()) {
        // Script override: an expert section in its own JSON file.
        std::ifstream in(script_path);
        if (!in) throw skillgen::ConfigError("cannot open script file: " + script_path);
        nlohmann::json j;
        in >> j;
        task.expert.skills.clear();
        for (const auto& s : j.at("skills")) {
            skillgen::SkillScript script;
            script.initiation_offset = skillgen::io::pose_from_json(s.at("initiation_offset"));
            for (const auto& m : s.at("moves"))
                script.moves.push_back(skillgen::io::move_from_json(m));
            task.expert.skills.push_back(std::move(script));
        }
        task.validate();
    }
    const auto demos = skillgen::record_source_demos(task, variant, n, seed);
    skillgen::DatasetStats stats;
    stats.attempts = n;
    stats.successes = n;
    skillgen::save_dataset(demos, stats, out_path);
    log_info("recorded " + std::to_string(demos.size()) + " source demos -> " + out_path);
    return 0;
}

int cmd_generate(const std::string& task_path, const std::string& variant,
                 const std::string& source_path, const skillgen::GenerationConfig& config,
                 int workers, const std::string& out_path) {
    const skillgen::TaskSpec task = skillgen::load_task(task_path);
    auto [source, src_stats] = skillgen::load_dataset(source_path);
    const auto result = skillgen::generate_dataset(task, variant, source, config, workers);
    skillgen::save_dataset(result.demos, result.stats, out_path);
    std::printf("mode=%s variant=%s %s\n", skillgen::mode_name(config.mode), variant.c_str(),
                stats_summary(result.stats).c_str());
    if (result.status == skillgen::GenerationStatus::shortfall) {
        log_info("generation shortfall: max attempts reached before the demo target");
        return 3;
    }
    log_info("wrote " + std::to_string(result.demos.size()) + " demos -> " + out_path);
    return 0;
}

int cmd_deploy(const std::string& task_path, const std::string& dataset_path,
               const std::string& hsp, int episodes, std::uint64_t seed,
               const std::string& variant, const std::string& stitch, bool oracle_termination,
               const std::string& traces_path) {
    const skillgen::TaskSpec task = skillgen::load_task(task_path);
    auto [dataset, stats] = skillgen::load_dataset(dataset_path);
    if (dataset.empty()) throw skillgen::ConfigError("deploy: dataset has no demonstrations");

    skillgen::HspVariant variant_kind;
    if (hsp == "class") variant_kind = skillgen::HspVariant::hsp_class;
    else if (hsp == "reg") variant_kind = skillgen::HspVariant::hsp_reg;
    else if (hsp == "oracle") variant_kind = skillgen::HspVariant::oracle;
    else throw skillgen::ConfigError("unknown hsp variant: " + hsp);

    // Predictor sidecar: fit on load when absent.
    const std::string sidecar = dataset_path + ".predictors.json";
    skillgen::TrainingLabels labels;
    if (std::ifstream(sidecar).good()) {
        labels = skillgen::load_predictor_state(sidecar);
        log_info("loaded predictor sidecar " + sidecar);
    } else {
        labels = skillgen::build_training_labels(dataset);
        skillgen::save_predictor_state(labels, sidecar);
        log_info("fitted predictors and wrote sidecar " + sidecar);
    }

    auto bundle = skillgen::make_hsp_skills(task, dataset, labels, variant_kind,
                                            oracle_termination);
    skillgen::DeployOptions opt;
    opt.variant = variant;
    opt.episodes = episodes;
    opt.seed = seed;
    opt.mode = bundle.mode;
    opt.stitch = stitch == "interp" ? skillgen::StitchMode::interp : skillgen::StitchMode::plan;
    const auto report = skillgen::deploy(task, bundle.skills, opt);

    std::printf("hsp=%s variant=%s episodes=%d successes=%d success_rate=%.4f\n", hsp.c_str(),
                variant.c_str(), report.episodes, report.successes, report.success_rate());
    for (const auto& [cause, count] : report.failures)
        std::printf("  failure %s: %d\n", skillgen::failure_name(cause), count);
    if (!traces_path.empty()) {
        skillgen::DatasetStats trace_stats;
        trace_stats.attempts = report.episodes;
        trace_stats.successes = report.successes;
        for (const auto& [cause, count] : report.failures)
            trace_stats.failures[-1][cause] = count;
        skillgen::save_dataset(report.traces, trace_stats, traces_path);
        log_info("wrote " + std::to_string(report.traces.size()) + " traces -> " + traces_path);
    }
    return 0;
}

int cmd_stats(const std::string& dataset_path) {
    auto [demos, stats] = skillgen::load_dataset(dataset_path);
    std::printf("demos=%zu %s\n", demos.size(), stats_summary(stats).c_str());
    std::map<std::size_t, int> motion_hist, skill_hist;
    for (const auto& d : demos) {
        for (const auto& m : d.motions) ++motion_hist[m.actions_world.size() / 50 * 50];
        for (const auto& s : d.skills) ++skill_hist[s.actions_object_frame.size() / 50 * 50];
    }
    std::printf("motion segment lengths (bucketed by 50):\n");
    for (const auto& [bucket, count] : motion_hist)
        std::printf("  [%zu, %zu): %d\n", bucket, bucket + 50, count);
    std::printf("skill segment lengths (bucketed by 50):\n");
    for (const auto& [bucket, count] : skill_hist)
        std::printf("  [%zu, %zu): %d\n", bucket, bucket + 50, count);
    return 0;
}

int cmd_replay(const std::string& task_path, const std::string& dataset_path, int index) {
    const skillgen::TaskSpec task = skillgen::load_task(task_path);
    auto [demos, stats] = skillgen::load_dataset(dataset_path);
    if (index < 0 || static_cast<std::size_t>(index) >= demos.size())
        throw skillgen::ConfigError("replay: demo index out of range");
    const auto result = skillgen::replay_demonstration(task, demos[static_cast<std::size_t>(index)]);
    std::printf("replayed demo %d: steps=%zu success=%s\n", index,
                demos[static_cast<std::size_t>(index)].step_count(),
                result.success ? "true" : "false");
    if (!result.success) {
        std::fprintf(stderr, "replay did not reach task success\n");
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skillgen: demonstration amplification and hybrid skill deployment"};
    app.require_subcommand(1);

    std::string task_path, variant = "D0", out_path, source_path, dataset_path;
    std::string script_path, traces_path;
    std::string mode = "skillgen", hsp = "class", stitch = "plan";
    int num = 10, episodes = 50, workers = 1, index = 0, max_attempts = -1, interp_steps = 5;
    std::uint64_t seed = 0;
    double sigma = 0.05, aug_t = 0.08, aug_r_deg = 80.0;
    bool augment = false, oracle_termination = false;

    auto* record = app.add_subcommand("record", "record scripted-expert source demonstrations");
    record->add_option("--task", task_path)->required();
    record->add_option("--variant", variant);
    record->add_option("--num,-n", num);
    record->add_option("--seed", seed);
    record->add_option("--script", script_path);
    record->add_option("--out", out_path)->required();

    auto* generate = app.add_subcommand("generate", "amplify a source dataset");
    generate->add_option("--task", task_path)->required();
    generate->add_option("--variant", variant);
    generate->add_option("--source", source_path)->required();
    generate->add_option("--mode", mode);
    generate->add_option("--num,-n", num);
    generate->add_option("--seed", seed);
    generate->add_option("--workers", workers);
    generate->add_option("--sigma", sigma);
    generate->add_flag("--augment-initiation", augment);
    generate->add_option("--aug-t", aug_t);
    generate->add_option("--aug-r", aug_r_deg);
    generate->add_option("--interp-steps", interp_steps);
    generate->add_option("--max-attempts", max_attempts);
    generate->add_option("--out", out_path)->required();

    auto* deploy = app.add_subcommand("deploy", "deploy hybrid skill policies");
    deploy->add_option("--task", task_path)->required();
    deploy->add_option("--variant", variant);
    deploy->add_option("--dataset", dataset_path)->required();
    deploy->add_option("--hsp", hsp);
    deploy->add_option("--episodes", episodes);
    deploy->add_option("--seed", seed);
    deploy->add_option("--stitch", stitch);
    deploy->add_flag("--oracle-termination", oracle_termination);
    deploy->add_option("--out", traces_path);

    auto* stats = app.add_subcommand("stats", "print dataset statistics");
    stats->add_option("--dataset", dataset_path)->required();

    auto* replay = app.add_subcommand("replay", "re-execute a stored demonstration");
    replay->add_option("--task", task_path)->required();
    replay->add_option("--dataset", dataset_path)->required();
    replay->add_option("--index", index);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (record->parsed())
            return cmd_record(task_path, variant, num, seed, out_path, script_path);
        if (generate->parsed()) {
            skillgen::GenerationConfig config;
            config.mode = parse_mode(mode);
            config.num_target_demos = num;
            config.action_noise_sigma = sigma;
            config.augment_initiation = augment;
            config.aug_translation = {aug_t};
            config.aug_rotation = {aug_r_deg * 3.14159265358979323846 / 180.0};
            config.interp_steps = interp_steps;
            config.seed = seed;
            config.max_attempts = max_attempts;
            return cmd_generate(task_path, variant, source_path, config, workers, out_path);
        }
        if (deploy->parsed())
            return cmd_deploy(task_path, dataset_path, hsp, episodes, seed, variant, stitch,
                              oracle_termination, traces_path);
        if (stats->parsed()) return cmd_stats(dataset_path);
        if (replay->parsed()) return cmd_replay(task_path, dataset_path, index);
    } catch (const skillgen::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const skillgen::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const skillgen::ExpertFailure& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
