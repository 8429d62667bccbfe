// Command-line front end: run the analysis pipeline, validate configs,
// scan basis dimensions, and summarize run manifests.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bbmix/pipeline.hpp"

namespace pl = bbmix::pipeline;

int main(int argc, char** argv) {
  CLI::App app{
      "Exact diagonalization and chaos diagnostics for a harmonically "
      "trapped two-component Bose gas"};
  app.require_subcommand(1);

  std::string config_path, manifest_path;
  std::optional<std::string> out_dir, cache_dir;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")
        ->required();
    sub->add_option("--out", out_dir,
                    "output directory (overrides the config)");
    sub->add_option("--cache-dir", cache_dir,
                    "spectrum cache directory (overrides the config)");
    sub->add_option("--threads", threads,
                    "BLAS thread count (overrides the config; >1 may break "
                    "bitwise reproducibility)");
    sub->add_option("--seed", seed, "RNG seed (overrides the config)");
  };

  CLI::App* cmd_run =
      app.add_subcommand("run", "execute the configured stages");
  add_common(cmd_run);
  CLI::App* cmd_validate = app.add_subcommand(
      "validate", "check a config and print its effective form");
  add_common(cmd_validate);
  CLI::App* cmd_scan = app.add_subcommand(
      "scan", "tabulate basis dimension against the energy cutoff");
  add_common(cmd_scan);
  CLI::App* cmd_report =
      app.add_subcommand("report", "summarize a run manifest");
  cmd_report->add_option("manifest", manifest_path, "path to manifest.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? pl::exit_ok : pl::exit_config;
  }

  try {
    const pl::CliOverrides overrides{out_dir, cache_dir, threads, seed};
    if (cmd_report->parsed()) {
      std::cout << pl::report(manifest_path);
    } else {
      const pl::RunConfig cfg = pl::load_config(config_path, overrides);
      if (cmd_run->parsed()) {
        const std::string manifest = pl::run_pipeline(cfg);
        std::cout << "manifest: " << manifest << "\n";
      } else if (cmd_validate->parsed()) {
        std::cout << pl::effective_config_json(cfg);
      } else if (cmd_scan->parsed()) {
        std::cout << pl::scan_dimensions(cfg);
      }
    }
    return pl::exit_ok;
  } catch (const pl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::exit_config;
  } catch (const pl::CacheError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::exit_cache;
  } catch (const pl::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::exit_stage;
  } catch (const pl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pl::exit_io;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return pl::exit_internal;
  }
}
