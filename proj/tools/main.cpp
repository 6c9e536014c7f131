#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "app/commands.hpp"

#ifndef MFG_LQG_FIXTURE_DIR
#define MFG_LQG_FIXTURE_DIR "fixtures"
#endif

int main(int argc, char** argv) {
  using namespace mfg_lqg::app;

  CLI::App app{"Major-minor LQG mean field game solver"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;
  std::string fixtures = MFG_LQG_FIXTURE_DIR;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "JSON problem configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "output directory")->required();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", opts.threads,
                    "worker threads (capacity hint; results unchanged)")
        ->check(CLI::NonNegativeNumber);
  };

  for (const char* name : {"solve-lqg", "solve-mfg", "simulate", "nash-gap"}) {
    add_common(app.add_subcommand(name, std::string("run ") + name));
  }
  CLI::App* verify =
      app.add_subcommand("verify", "run the acceptance suite on the fixtures");
  verify->add_option("--out", opts.out, "output directory")->required();
  verify->add_option("--fixtures", fixtures, "fixture directory")
      ->check(CLI::ExistingDirectory);
  verify->add_option("--threads", opts.threads, "worker threads")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub == verify) {
    return cmd_verify(opts.out, fixtures, opts.threads, std::cout);
  }
  if (sub->count("--seed") > 0) opts.seed = seed;
  return run_command(sub->get_name(), opts, std::cout, std::cerr);
}
