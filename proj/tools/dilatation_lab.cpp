#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dilatation/lab/config.hpp"
#include "dilatation/lab/experiments.hpp"
#include "dilatation/lab/report.hpp"

namespace lab = dilatation::lab;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

int run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
        const std::string& format) {
  lab::ExperimentConfig cfg;
  try {
    cfg = lab::load_config(config_path);
    if (seed) cfg.seed = *seed;
  } catch (const dilatation::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }
  const auto fmt = format == "json" ? lab::Format::Json : lab::Format::Csv;
  lab::RunReport rep;
  try {
    rep = lab::run_experiment(cfg);
  } catch (const dilatation::Error& e) {
    std::cerr << e.what() << "\n";
    bool config = e.kind() == dilatation::ErrorKind::ConfigInvalid ||
                  e.kind() == dilatation::ErrorKind::UnknownExperiment;
    return config ? kExitConfig : kExitFail;
  }
  try {
    if (out_dir.empty()) {
      std::cout << lab::render(rep, fmt);
    } else {
      auto path = lab::emit_report(rep, out_dir, fmt);
      std::cerr << "wrote " << path.string() << "\n";
    }
  } catch (const dilatation::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitFail;
  }
  for (const auto& note : rep.notes) std::cerr << note << "\n";
  std::cerr << rep.experiment << ": " << rep.count(lab::kPass) << " pass, " << rep.count(lab::kFail) << " fail, "
            << rep.count(lab::kFailAsExpected) << " fail-as-expected\n";
  return rep.success() ? 0 : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dilatation structure experiment runner"};
  app.require_subcommand(1);
  auto* cmd = app.add_subcommand("run", "Run one experiment from a JSON config");
  std::string config_path, out_dir, format = "csv";
  std::optional<std::uint64_t> seed;
  cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", seed, "Override the config seed");
  cmd->add_option("--out", out_dir, "Output directory; stdout when omitted");
  cmd->add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  return run(config_path, seed, out_dir, format);
}
