#pragma once

// Command implementations shared by the CLI and the experiment manifests.

#include "pisoc/config.hpp"
#include "pisoc/estimators.hpp"
#include "pisoc/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace pisoc {

using Path = std::filesystem::path;

// Each command writes config.resolved.json plus its data files into `out`
// and returns a JSON summary of what it produced.
nlohmann::json cmd_train(const RunConfig& cfg, const Path& out);
nlohmann::json cmd_sample(const RunConfig& cfg, const std::string& kind, const Path& out);
nlohmann::json cmd_benchmark(const RunConfig& cfg, const Path& out);
nlohmann::json cmd_extrapolate(const RunConfig& cfg, const Path& out);
nlohmann::json cmd_oracle(const RunConfig& cfg, const Path& out);

void write_snapshot(const RunConfig& cfg, const Path& out);

/// Machine-readable error document used on nonzero exit.
nlohmann::json error_json(const std::exception& e);

struct Verdict {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double std_error = 0.0;
  double target = 0.0;
  double deviation = 0.0;
  double allowed = 0.0;
  double runtime = 0.0;
  double budget = 0.0;
  std::vector<std::string> reasons;

  nlohmann::json to_json() const;
};

/// Manifest fields: name, config (inline RunConfig), pipeline
/// (propagator | free_energy), measure (direct | variational), target
/// {kind, value?}, relation (equal | upper_bound), tolerance {kind: abs | rel
/// | sigma, value}, max_runtime_s. Controls with a residual and no
/// checkpoint are trained first from the training block.
Verdict run_experiment(const nlohmann::json& manifest, const Path& out);
Verdict run_experiment_file(const Path& manifest, const Path& out);

}  // namespace pisoc
