#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "posctl/scenario.hpp"

namespace {

std::vector<std::string> split_values(const std::string& text) {
  std::string s = text;
  for (char& c : s) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void summarize(const posctl::RunManifest& m) {
  if (!m.error.empty()) std::cerr << "error: " << m.error << '\n';
  for (const auto& t : m.tasks) {
    std::cout << t.name << " [" << t.type << "] " << t.status;
    if (!t.message.empty()) std::cout << ": " << t.message;
    std::cout << '\n';
  }
  std::cout << "manifest: " << m.output_dir << "/manifest.json (exit " << m.exit_code << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positivity-constrained control of coupled parabolic systems"};
  app.set_version_flag("--version", posctl::kToolVersion);
  app.require_subcommand(1);

  std::string out;
  int modes = 0;
  int steps = 0;
  long long seed = -1;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--modes", modes, "State truncation J (highest mode)")->check(CLI::PositiveNumber);
    cmd->add_option("--steps", steps, "Time steps, replacing every task's steps")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Seed for random data")->check(CLI::NonNegativeNumber);
  };

  std::string config;
  auto* run = app.add_subcommand("run", "Run every task of a config");
  run->add_option("config", config, "Config file")->required();
  add_common(run);

  std::string param;
  std::string values;
  auto* sweep = app.add_subcommand("sweep", "Run a config once per parameter value");
  sweep->add_option("config", config, "Config file")->required();
  sweep->add_option("--param", param, "Parameter as section.key, e.g. task.stair.epsilon")->required();
  sweep->add_option("--values", values, "Comma-separated values (may be empty)")
      ->required()
      ->expected(0, 1);
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : posctl::exit_validation;
  }

  posctl::RunOverrides o;
  if (!out.empty()) o.out = out;
  if (modes > 0) o.modes = modes;
  if (steps > 0) o.steps = steps;
  if (seed >= 0) o.seed = static_cast<std::uint64_t>(seed);

  try {
    const auto manifest = run->parsed() ? posctl::run_config(config, o)
                                        : posctl::sweep_config(config, param, split_values(values), o);
    summarize(manifest);
    return manifest.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return posctl::exit_software;
  }
}
