#pragma once

#include <span>
#include <string>

#include "longctx/config.hpp"

namespace longctx {

inline constexpr const char* kOutDirEnvVar = "LONGCTX_OUT";

/// One report assertion: pass is value <cmp> threshold.
struct CheckRow {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string cmp;  // "<=", ">=" or "=="
  bool pass = false;
};

/// Runs one subcommand against a loaded config, writing reports under
/// cfg.out_dir. Returns 0 iff every declared assertion passed, 1 otherwise.
/// Configuration and i/o problems surface as Error.
int run_command(const std::string& command, const RunConfig& cfg);

/// Full command-line entry point (args exclude the program name):
///   <command> --config <path> [--out <dir>] [--seed <u64>]
/// Exit status: 0 all assertions pass, 1 assertion failure, 2 usage/config
/// error (with a machine-readable error JSON on stderr).
int run_cli(std::span<const std::string> args);

}  // namespace longctx
