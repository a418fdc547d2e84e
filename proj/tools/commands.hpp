#pragma once

#include <filesystem>
#include <string>

#include "run_config.hpp"

namespace invmm::cli {

struct CommonArgs {
    std::filesystem::path out;
    std::size_t workers = 1;
    std::string mode; // invert: adaptive | fixed:<l> | joint (overrides config)
};

void cmd_gen_dataset(const RunConfig& cfg, const CommonArgs& args);
void cmd_train(const RunConfig& cfg, const CommonArgs& args);
void cmd_invert(const RunConfig& cfg, const CommonArgs& args);
void cmd_audit(const RunConfig& cfg, const CommonArgs& args);
void cmd_experiment(const RunConfig& cfg, const CommonArgs& args, const std::string& kind);
void cmd_report(const std::filesystem::path& in_dir, const CommonArgs& args);

} // namespace invmm::cli
