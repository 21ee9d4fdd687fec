// Command-line entry point: one subcommand per run.
//
//   dyg2vec <ingest|split|pretrain|train|probe|eval> [--config FILE] [--set k=v]... [--<key> VALUE]...
//   dyg2vec timing RUN_DIR

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dyg2vec/config.hpp"
#include "dyg2vec/error.hpp"
#include "dyg2vec/pipeline.hpp"

namespace {

int print_timing(const std::string& run_dir) {
  const auto path = std::filesystem::path(run_dir) / "timing.csv";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error[data]: no timing.csv in '" << run_dir << "'\n";
    return dyg::kExitData;
  }
  std::cout << in.rdbuf();
  return dyg::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Window-based dynamic graph encoder: ingest, split, pretrain, train, probe, eval"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app = nullptr;
    std::string config_file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
  };
  std::map<std::string, Sub> subs;
  for (const auto& name : dyg::subcommands()) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, "run the " + name + " stage");
    s.app->add_option("-c,--config", s.config_file, "key = value config file");
    s.app->add_option("--set", s.sets, "override, key=value (repeatable)");
    for (const auto& [key, def] : dyg::RunConfig::defaults())
      s.app->add_option("--" + key, s.flags[key], "default: " + (def.empty() ? std::string("<none>") : def));
  }
  std::string timing_dir;
  auto* timing = app.add_subcommand("timing", "print the per-epoch timing table of a run");
  timing->add_option("run_dir", timing_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dyg::kExitConfig;
  }

  if (timing->parsed()) return print_timing(timing_dir);

  for (auto& [name, s] : subs) {
    if (!s.app->parsed()) continue;
    dyg::RunConfig cfg;
    try {
      if (!s.config_file.empty()) cfg.load_file(s.config_file);
      cfg.apply_overrides(s.sets);
      for (const auto& [key, value] : s.flags)
        if (s.app->count("--" + key) > 0) cfg.set(key, value);
    } catch (const std::exception& e) {
      const int code = dyg::exit_code_for(e);
      std::cerr << "error[" << dyg::error_kind(code) << "]: " << e.what() << '\n';
      return code;
    }
    const auto result = dyg::run_subcommand(name, cfg, std::cout);
    if (result.exit_code != 0) {
      std::cerr << "error[" << dyg::error_kind(result.exit_code) << "]: " << result.reason << '\n';
      return result.exit_code;
    }
    std::cout << "run_dir " << result.run_dir << '\n';
    return 0;
  }
  return dyg::kExitConfig;
}
