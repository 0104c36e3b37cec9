#include <CLI11.hpp>
#include <iostream>

#include "skelforge/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"skelforge: skeleton-guided surface reconstruction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  const std::vector<std::string> commands = {"gen-data",       "train-skeleton", "refine",
                                             "recon-explicit", "recon-implicit", "eval",
                                             "interp"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--set", overrides, "dotted-path override, key=value");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const skelforge::RunConfig cfg = skelforge::load_config(config_path, overrides);
    return skelforge::run_command(command, cfg);
  } catch (const skelforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
