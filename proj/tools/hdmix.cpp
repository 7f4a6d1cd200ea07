// hdmix <command> --config <path> [--out <dir>] [--seed <u64>]

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hdmix/config.hpp"
#include "hdmix/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mixed variational solver for history-dependent contact problems"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  app.add_option("command", command, "solve | study-convergence | optimize | verify | demo-contact")->required();
  app.add_option("-c,--config", config_path, "configuration file")->required();
  auto* out_opt = app.add_option("-o,--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("-s,--seed", seed, "random seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hdmix::kExitConfig;
  }

  const auto cmd = hdmix::parse_command(command);
  if (!cmd) {
    std::cerr << "unknown command `" << command << "`\n";
    return hdmix::kExitConfig;
  }
  hdmix::RunConfig cfg;
  try {
    cfg = hdmix::load_config(config_path);
  } catch (const hdmix::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return hdmix::kExitConfig;
  }
  // The command line takes precedence over the file.
  cfg.command = *cmd;
  if (*out_opt) cfg.out_dir = out_dir;
  if (*seed_opt) cfg.seed = seed;
  return hdmix::run(cfg, std::cout, std::cerr);
}
