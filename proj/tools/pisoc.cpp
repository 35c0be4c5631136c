#include "pisoc/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration (JSON)")->required();
  cmd->add_option("--seed", c.seed, "overrides the configured seed");
  cmd->add_option("--threads", c.threads, "worker cap; results do not depend on it");
  cmd->add_option("--out", c.out, "output directory (default: output.dir)");
}

pisoc::RunConfig resolve(const Common& c, pisoc::Path& out) {
  pisoc::RunConfig cfg = pisoc::RunConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.out.empty()) cfg.output.dir = c.out;
  out = cfg.output.dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controlled path sampling for Euclidean path integrals"};
  app.require_subcommand(1);

  Common train_opts, sample_opts, bench_opts, extra_opts, oracle_opts;
  std::string kind;
  std::string manifest;
  std::string experiment_out = "experiments_out";

  auto* train = app.add_subcommand("train", "train a control and write a checkpoint");
  add_common(train, train_opts);
  auto* sample = app.add_subcommand("sample", "direct and variational estimates");
  add_common(sample, sample_opts);
  sample->add_option("--kind", kind, "propagator | free_energy | correlation (default: estimator.kind)");
  auto* bench = app.add_subcommand("benchmark", "running estimates across independent runs");
  add_common(bench, bench_opts);
  auto* extra = app.add_subcommand("extrapolate", "evaluate a chain controller at other sizes");
  add_common(extra, extra_opts);
  auto* oracle = app.add_subcommand("oracle", "exact reference values");
  add_common(oracle, oracle_opts);
  auto* experiment = app.add_subcommand("experiment", "run an experiment manifest");
  experiment->add_option("manifest", manifest, "manifest file")->required();
  experiment->add_option("--out", experiment_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    pisoc::Path out;
    nlohmann::json result;
    if (*train) {
      result = pisoc::cmd_train(resolve(train_opts, out), out);
    } else if (*sample) {
      const auto cfg = resolve(sample_opts, out);
      result = pisoc::cmd_sample(cfg, kind.empty() ? cfg.estimator.kind : kind, out);
    } else if (*bench) {
      result = pisoc::cmd_benchmark(resolve(bench_opts, out), out);
    } else if (*extra) {
      result = pisoc::cmd_extrapolate(resolve(extra_opts, out), out);
    } else if (*oracle) {
      result = pisoc::cmd_oracle(resolve(oracle_opts, out), out);
    } else if (*experiment) {
      const auto v = pisoc::run_experiment_file(manifest, experiment_out);
      std::cout << v.to_json().dump(2) << '\n';
      return v.pass ? 0 : 3;
    }
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << pisoc::error_json(e).dump() << '\n';
    return 2;
  }
}
