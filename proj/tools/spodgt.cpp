// Command-line front end: run, theory, check, sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "spodgt/runner.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDivergence = 3;
constexpr int kCheckFailure = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out_dir;
  std::string graph_file;
  std::optional<int> log_stride;
  std::optional<int> trials;
};

spodgt::RunConfig resolve(const Options& o, bool config_required) {
  spodgt::RunConfig c;
  if (!o.config.empty()) c = spodgt::load_config(o.config);
  else if (config_required) throw spodgt::ConfigError("--config: required for this command");
  if (o.seed) c.seed = *o.seed;
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (!o.graph_file.empty()) c.graph.file = o.graph_file;
  if (o.log_stride) {
    if (*o.log_stride < 1) throw spodgt::ConfigError("--log-stride: must be >= 1");
    c.log_stride = *o.log_stride;
  }
  if (o.trials) {
    if (*o.trials < 2) throw spodgt::ConfigError("--trials: must be >= 2");
    c.check.trials = *o.trials;
  }
  if (o.jobs < 1) throw spodgt::ConfigError("--jobs: must be >= 1");
  return c;
}

void emit(const nlohmann::json& j, const spodgt::RunConfig& c, const std::string& name, bool to_file) {
  std::cout << j.dump(2) << '\n';
  if (to_file) {
    std::filesystem::create_directories(c.out_dir);
    std::ofstream(std::filesystem::path(c.out_dir) / name) << j.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sporadic decentralized gradient tracking simulator"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
    sub->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str();
    sub->add_option("--out-dir", o.out_dir, "Output directory (overrides the config)");
    sub->add_option("--graph-file", o.graph_file, "Edge-list file (overrides graph generation)");
    sub->add_option("--log-stride", o.log_stride, "Log every n-th iteration");
    sub->add_option("--trials", o.trials, "Monte-Carlo trials for check");
  };
  CLI::App* run = app.add_subcommand("run", "Run every configured variant and repeat");
  CLI::App* theory = app.add_subcommand("theory", "Print the theory report as JSON");
  CLI::App* check = app.add_subcommand("check", "Monte-Carlo check of the lemma inequalities");
  CLI::App* sweep = app.add_subcommand("sweep", "Run the configured parameter sweep");
  for (CLI::App* s : {run, theory, check, sweep}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) {
      const spodgt::RunConfig c = resolve(o, true);
      const spodgt::ResultsTable t = spodgt::cmd_run(c, o.jobs);
      spodgt::write_results(t, c.out_dir);
      for (std::size_t v = 0; v < t.traces.size(); ++v) {
        for (std::size_t r = 0; r < t.traces[v].size(); ++r) {
          const auto& tr = t.traces[v][r];
          const auto& last = tr.rows.back();
          std::printf("%-16s repeat %zu  k=%lld  loss=%.6g  |grad|^2=%.3g  delay=%.6g\n", tr.variant.c_str(), r,
                      static_cast<long long>(last.k), last.loss, last.grad_sq_norm, last.tau_total_cum);
        }
      }
      std::printf("wrote %s\n", c.out_dir.c_str());
    } else if (theory->parsed()) {
      const spodgt::RunConfig c = resolve(o, true);
      try {
        emit(spodgt::cmd_theory(c), c, "theory.json", !o.out_dir.empty());
      } catch (const spodgt::InfeasibleError& e) {
        emit({{"feasible", false}, {"reason", e.what()}}, c, "theory.json", !o.out_dir.empty());
        return kCheckFailure;
      }
    } else if (check->parsed()) {
      const spodgt::RunConfig c = resolve(o, false);
      const spodgt::CheckOutcome out = spodgt::cmd_check(c, c.check.trials, o.jobs);
      emit(out.to_json(), c, "check.json", !o.out_dir.empty());
      return out.pass() ? kOk : kCheckFailure;
    } else if (sweep->parsed()) {
      const spodgt::RunConfig c = resolve(o, true);
      const auto points = spodgt::cmd_sweep(c, o.jobs);
      spodgt::write_sweep(c, points, c.out_dir);
      std::printf("wrote %zu sweep points to %s\n", points.size(), c.out_dir.c_str());
    }
  } catch (const spodgt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const spodgt::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const spodgt::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kConfigError;
  } catch (const spodgt::GenerationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
