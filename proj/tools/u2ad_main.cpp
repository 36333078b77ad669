#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "u2ad/config.hpp"
#include "u2ad/errors.hpp"
#include "u2ad/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kPrecondition = 3, kDivergence = 4 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_dir = "run";
  std::optional<int> strategy;
  std::string device = "cpu";
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed (overrides io.seed)");
  cmd->add_option("--run-dir", o.run_dir, "run directory")->capture_default_str();
  cmd->add_option("--strategy", o.strategy, "training strategy")->check(CLI::IsMember({1, 2, 3}));
  cmd->add_option("--device", o.device, "compute device")
      ->check(CLI::IsMember({"cpu", "accelerator"}))
      ->capture_default_str();
  cmd->add_flag("-q,--quiet", o.quiet, "suppress progress messages");
}

u2ad::RunContext make_context(const Options& o) {
  std::optional<std::filesystem::path> file;
  if (!o.config_path.empty()) file = o.config_path;
  u2ad::RunConfig cfg = u2ad::load_run_config(file, true);
  if (o.seed) cfg.io.seed = *o.seed;
  if (o.strategy) cfg.strategy = *o.strategy;
  cfg.validate();
  if (o.device == "accelerator") {
    std::cerr << "u2ad: no accelerator backend is available; running on cpu\n";
  }
  return {o.run_dir, std::move(cfg), o.quiet ? nullptr : &std::cerr};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-guided masked-autoencoder anomaly detection on spinal cord phantoms"};
  app.require_subcommand(1);
  Options opts;
  const std::map<std::string, std::pair<std::string, std::function<void(const u2ad::RunContext&)>>> commands = {
      {"gen-data", {"generate the synthetic phantom corpus", u2ad::cmd_gen_data}},
      {"pretrain", {"pretrain the masked autoencoder on healthy cases", u2ad::cmd_pretrain}},
      {"adapt", {"uncertainty-guided adaptation on the target set", u2ad::cmd_adapt}},
      {"detect", {"score every target case", u2ad::cmd_detect}},
      {"eval", {"cross-validated patient and segment metrics", u2ad::cmd_eval}},
      {"sweep", {"K and robustness sweeps", u2ad::cmd_sweep}},
      {"plot", {"render overlays, curves, trends and sweep charts", u2ad::cmd_plot}},
  };
  std::function<void(const u2ad::RunContext&)> selected;
  for (const auto& [name, entry] : commands) {
    CLI::App* cmd = app.add_subcommand(name, entry.first);
    add_common(cmd, opts);
    cmd->callback([&selected, fn = entry.second] { selected = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    selected(make_context(opts));
    return kOk;
  } catch (const u2ad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const u2ad::ArgumentError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const u2ad::PreconditionError& e) {
    std::cerr << "precondition error: " << e.what() << '\n';
    return kPrecondition;
  } catch (const u2ad::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
