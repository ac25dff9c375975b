#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "toxpipe/config.hpp"
#include "toxpipe/errors.hpp"
#include "toxpipe/pipeline.hpp"
#include "toxpipe/version.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "override the master seed");
    cmd->add_option("--out", args.out_dir, "override the output directory");
    cmd->add_option("--threads", args.threads, "worker thread cap");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toxpipe: discussion-comment attack classification pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", toxpipe::kVersion);

    CommonArgs args;
    std::string active_stage;
    for (const std::string& stage : toxpipe::pipeline::stage_names()) {
        CLI::App* cmd = app.add_subcommand(stage, "run the " + stage + " stage");
        add_common(cmd, args);
        cmd->callback([&active_stage, stage]() { active_stage = stage; });
    }

    bool show_defaults = false;
    CLI::App* config_cmd = app.add_subcommand("config", "configuration helpers");
    config_cmd->add_flag("--defaults", show_defaults, "print the default config file");

    CLI11_PARSE(app, argc, argv);

    if (config_cmd->parsed()) {
        if (show_defaults) {
            std::cout << toxpipe::config::default_config_text();
            return 0;
        }
        std::cerr << "error: stage=config code=config msg=\"nothing to do; try --defaults\"\n";
        return 1;
    }

    try {
        toxpipe::config::PipelineConfig cfg = toxpipe::config::load_config(args.config_path);
        toxpipe::config::apply_overrides(cfg, {args.seed, args.out_dir, args.threads});
        toxpipe::pipeline::run_stage(active_stage, cfg);
        return 0;
    } catch (const toxpipe::Error& e) {
        std::cerr << "error: stage=" << active_stage << " code=" << e.code() << " msg=\""
                  << e.what() << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: stage=" << active_stage << " code=internal msg=\"" << e.what()
                  << "\"\n";
        return 1;
    }
}
