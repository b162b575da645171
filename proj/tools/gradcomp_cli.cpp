// Copyright 2026 The gradcomp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <fmt/format.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradcomp/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

int run(gradcomp::ExperimentKind kind, const CommonFlags& flags) {
  using namespace gradcomp;
  try {
    Config cfg = flags.config.empty() ? Config::from_string("", "<defaults>")
                                      : Config::from_file(flags.config);
    for (const auto& item : flags.overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(fmt::format("--override: expected section.key=value, got '{}'", item));
      }
      cfg.set(item.substr(0, eq), item.substr(eq + 1));
    }
    if (flags.seed) cfg.set("run.seed", std::to_string(*flags.seed));
    const auto out_dir = resolve_out_dir(flags.out, cfg);
    const RunReport report = run_experiment(kind, cfg, out_dir);
    for (const auto& line : report.diagnostics) std::cerr << line << "\n";
    std::cout << fmt::format("{}: {} ({:.1f} s), wrote {} file(s) to {}\n", experiment_name(kind),
                             report.status, report.wall_seconds, report.files.size(),
                             out_dir.string());
    return report.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradcomp: gradient compression experiments"};
  app.set_version_flag("--version", std::string(gradcomp::kVersion));
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"sweep", "variance versus bits sweep over schemes and dimensions"},
      {"var-compare", "per-vector empirical variance of several schemes"},
      {"cgd", "compressed gradient descent on a random quadratic"},
      {"dcgd", "distributed compressed gradient descent (simulated workers)"},
      {"rip-estimate", "empirical and theoretical RIP parameters of a random frame"},
      {"frame-gen", "generate a frame and store it in the frame cache"},
  };
  std::vector<CommonFlags> flags(commands.size());
  int exit_code = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].first, commands[i].second);
    CommonFlags& f = flags[i];
    sub->add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory (default: [run] out, $GRADCOMP_OUT_DIR)");
    sub->add_option("--seed", f.seed, "master seed, overrides [run] seed");
    sub->add_option("--override", f.overrides, "section.key=value, repeatable");
    const auto kind = *gradcomp::parse_experiment_kind(commands[i].first);
    sub->callback([kind, &f, &exit_code] { exit_code = run(kind, f); });
  }
  CLI11_PARSE(app, argc, argv);
  return exit_code;
}
