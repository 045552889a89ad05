// Minimal end-to-end use of the library: record scripted source demos,
// amplify them onto a broader reset distribution, and deploy an HSP-Class
// policy trained on the generated data.
//
//   ./sample_minimal_pipeline path/to/toy_lift.json

#include "skillgen/datagen.hpp"
#include "skillgen/expert.hpp"
#include "skillgen/hsp.hpp"
#include "skillgen/task_io.hpp"

#include <cstdio>

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <task.json>\n", argv[0]);
        return 1;
    }
    using namespace skillgen;
    const TaskSpec task = load_task(argv[1]);

    const auto source = record_source_demos(task, "D0", 5, /*seed=*/1);
    std::printf("recorded %zu source demos\n", source.size());

    GenerationConfig config;
    config.mode = GenerationMode::skillgen;
    config.num_target_demos = 25;
    config.seed = 7;
    const auto generated = generate_dataset(task, "D1", source, config, /*workers=*/2);
    std::printf("generated %d/%d attempts succeeded (rate %.2f)\n", generated.stats.successes,
                generated.stats.attempts, generated.stats.generation_rate());

    const auto labels = build_training_labels(generated.demos);
    const auto bundle = make_hsp_skills(task, generated.demos, labels, HspVariant::hsp_class);
    DeployOptions opt;
    opt.variant = "D1";
    opt.episodes = 10;
    opt.seed = 3;
    opt.mode = bundle.mode;
    const auto report = deploy(task, bundle.skills, opt);
    std::printf("deployment success rate: %.2f\n", report.success_rate());
    return 0;
}
