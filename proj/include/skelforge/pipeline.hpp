#pragma once

#include "skelforge/config.hpp"

namespace skelforge {

int cmd_gen_data(const RunConfig& cfg);
int cmd_train_skeleton(const RunConfig& cfg);
int cmd_refine(const RunConfig& cfg);
int cmd_recon_explicit(const RunConfig& cfg);
int cmd_recon_implicit(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_interp(const RunConfig& cfg);

/// Dispatch by command name; returns the process exit code (0 success,
/// 2 config error, 3 missing artifact).
int run_command(const std::string& command, const RunConfig& cfg);

}  // namespace skelforge
