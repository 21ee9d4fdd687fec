#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include "dyg2vec/config.hpp"
#include "dyg2vec/ctdg.hpp"
#include "dyg2vec/downstream.hpp"
#include "dyg2vec/encoder.hpp"

namespace dyg {

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"ingest", "split", "pretrain", "train", "probe", "eval"};
  return names;
}

struct RunResult {
  int exit_code = kExitOk;
  std::string run_dir;  // empty when the run failed before creating it
  std::string reason;   // single-line failure description
};

/// Runs one subcommand end to end. Never throws: failures map to an exit code
/// and a one-line reason.
RunResult run_subcommand(const std::string& name, const RunConfig& cfg, std::ostream& log);

/// Exit code for an exception raised by the library.
int exit_code_for(const std::exception& e);
/// "config", "data", "numeric" or "internal".
std::string error_kind(int exit_code);

/// Dataset named by the config: "synthetic" or a CSV / cache path.
CTDG load_run_graph(const RunConfig& cfg);
SplitSpec load_run_split(const RunConfig& cfg, const CTDG& graph);
EncoderConfig encoder_config(const RunConfig& cfg, const CTDG& graph);
DownstreamConfig downstream_config(const RunConfig& cfg, const CTDG& graph);

/// `epoch,phase,ms` rows, four phases per epoch.
void write_timing_report(std::ostream& out, const std::vector<DownstreamEpoch>& epochs);

}  // namespace dyg
