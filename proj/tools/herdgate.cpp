#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "herdgate/error.hpp"

int main(int argc, char** argv) {
    CLI::App app{"herdgate: herd-test diagnostics, simulation and fitting toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", herdgate::cli::kToolVersion);

    herdgate::cli::CommonArgs args;
    int (*handler)(const herdgate::cli::CommonArgs&) = nullptr;

    struct Sub {
        const char* name;
        const char* help;
        int (*fn)(const herdgate::cli::CommonArgs&);
    };
    const Sub subs[] = {
        {"generate", "Generate a synthetic herd-test dataset", herdgate::cli::cmd_generate},
        {"train", "Train a gradient-boosted classifier", herdgate::cli::cmd_train},
        {"tune", "Random hyperparameter search with repeated hold-outs", herdgate::cli::cmd_tune},
        {"eval", "ROC, operating points, confusion and yearly errors", herdgate::cli::cmd_eval},
        {"importance", "Permutation feature importance with a noise control",
         herdgate::cli::cmd_importance},
        {"practices", "Per-practice accuracy and herd-size correlation",
         herdgate::cli::cmd_practices},
        {"simulate", "Run the herd transmission simulator", herdgate::cli::cmd_simulate},
        {"fit", "Fit simulator parameters by ABC-SMC", herdgate::cli::cmd_fit},
        {"sweep", "Scenario grid over test sensitivity/specificity shifts",
         herdgate::cli::cmd_sweep},
    };

    for (const auto& sub : subs) {
        CLI::App* s = app.add_subcommand(sub.name, sub.help);
        s->add_option("--config", args.config_path, "Path to the command's JSON config")
            ->envname("HERDGATE_CONFIG")
            ->required();
        s->add_option("--out", args.out_dir, "Output directory (must not hold a previous run)")
            ->envname("HERDGATE_OUT")
            ->required();
        s->add_option("--seed", args.seed, "Master seed; per-stage seeds derive from it")
            ->envname("HERDGATE_SEED");
        s->add_option("--threads", args.threads, "Worker threads (0 = all cores)")
            ->envname("HERDGATE_THREADS");
        s->callback([&handler, fn = sub.fn] { handler = fn; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return handler(args);
    } catch (const herdgate::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
