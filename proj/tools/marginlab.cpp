#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "marginlab/errors.hpp"
#include "marginlab/runner.hpp"

using namespace marginlab;

namespace {

int workers_from_env() {
  const char* env = std::getenv("MARGINLAB_WORKERS");
  if (!env || !*env) return 1;
  try {
    std::size_t used = 0;
    const int w = std::stoi(env, &used);
    if (used != std::string(env).size() || w < 1) throw ConfigError("");
    return w;
  } catch (...) {
    throw ConfigError("MARGINLAB_WORKERS must be a positive integer");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marginlab: shortcut learning and max-margin experiments"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  std::string check;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
    sub->add_option("--workers", workers, "concurrent sweep cells (default MARGINLAB_WORKERS or 1)");
    sub->add_option("--seed", seed, "seed override for dgp.seed and train.seed");
  };
  for (const char* name : {"run", "gen", "train", "maxmargin", "sweep"}) add_common(app.add_subcommand(name));
  auto* verify = app.add_subcommand("verify", "run one verification check");
  verify->add_option("check", check, "check name")->check(CLI::IsMember(verify_checks()));
  add_common(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::string command = sub->get_name();
  if (command == "verify" && !check.empty()) command += ":" + check;

  try {
    RunOptions opts;
    if (!out_dir.empty()) opts.out_dir = out_dir;
    if (sub->count("--seed")) opts.seed = seed;
    opts.workers = sub->count("--workers") ? workers : workers_from_env();
    const ExperimentConfig cfg = load_config(config_path);
    const json summary = run_command(command, cfg, opts);
    std::cout << summary.at("command").get<std::string>() << ": wrote "
              << summary.at("config").at("out_dir").get<std::string>() << "/summary.json\n";
    if (summary.at("result").contains("pass"))
      std::cout << "pass: " << (summary.at("result").at("pass").get<bool>() ? "true" : "false") << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
