#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "commands.hpp"
#include "invmm/errors.hpp"

namespace {

// Exit codes: 0 success, 2 configuration error, 3 runtime error.
constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

struct GlobalArgs {
    std::string config_path;
    std::string out = ".";
    std::string in;
    std::size_t workers = 1;
    std::string mode;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, GlobalArgs& args, bool needs_config) {
    if (needs_config) {
        cmd->add_option("--config", args.config_path, "JSON run configuration")->required();
    }
    cmd->add_option("--out", args.out, "output directory")->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--workers", args.workers, "parallel inversion jobs");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"invmm: train toy diffusion models and measure per-image memorization "
                 "by inverting a sensitive noise distribution"};
    app.require_subcommand(1);

    GlobalArgs args;
    auto* gen = app.add_subcommand("gen-dataset", "generate a toy dataset file");
    add_common(gen, args, true);
    auto* train = app.add_subcommand("train", "train a denoiser checkpoint");
    add_common(train, args, true);
    auto* invert = app.add_subcommand("invert", "invert images against a checkpoint");
    add_common(invert, args, true);
    invert->add_option("--mode", args.mode, "adaptive | fixed:<lambda> | joint");
    auto* audit = app.add_subcommand("audit", "full memorization audit of a checkpoint");
    add_common(audit, args, true);
    auto* experiment = app.add_subcommand("experiment", "factor grids: duplication|epoch|lambda");
    std::string exp_kind;
    experiment->add_option("kind", exp_kind, "duplication | epoch | lambda")->required();
    add_common(experiment, args, true);
    auto* report = app.add_subcommand("report", "regenerate summaries from a run directory");
    report->add_option("--in", args.in, "existing run directory")->required();
    report->add_option("--out", args.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigExit;
    }

    try {
        invmm::cli::CommonArgs common;
        common.out = args.out;
        common.workers = args.workers;
        common.mode = args.mode;
        std::optional<std::uint64_t> seed;
        if (args.seed >= 0) seed = static_cast<std::uint64_t>(args.seed);

        if (report->parsed()) {
            invmm::cli::cmd_report(args.in, common);
            return 0;
        }
        const invmm::cli::RunConfig cfg = invmm::cli::RunConfig::load(args.config_path, seed);
        if (gen->parsed()) {
            invmm::cli::cmd_gen_dataset(cfg, common);
        } else if (train->parsed()) {
            invmm::cli::cmd_train(cfg, common);
        } else if (invert->parsed()) {
            invmm::cli::cmd_invert(cfg, common);
        } else if (audit->parsed()) {
            invmm::cli::cmd_audit(cfg, common);
        } else if (experiment->parsed()) {
            invmm::cli::cmd_experiment(cfg, common, exp_kind);
        }
        return 0;
    } catch (const invmm::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigExit;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeExit;
    }
}
