#pragma once

// Run configuration: a JSON document with model, grid, control, training,
// estimator and output blocks. Unknown keys are rejected.

#include "pisoc/boundary.hpp"
#include "pisoc/control.hpp"
#include "pisoc/model.hpp"
#include "pisoc/sde.hpp"
#include "pisoc/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pisoc {

struct ModelConfig {
  std::string kind;  // free | anharmonic | coulomb | rotor
  double beta = 0.0;
  double lambda = 0.0;
  double r_cut = 1e-3;
  double J = 1.0;
  int N = 3;  // rotor sites, or dimensions of a free particle
  std::string boundary = "open";

  ModelSystem build() const;
};

struct GridConfig {
  std::string scheme = "linear";
  int K_train = 64;
  int K_eval = 256;
};

struct ControlConfig {
  std::string residual = "none";  // none | mlp | birecurrent
  std::vector<int> hidden{64, 64};
  int H = 32;
  std::optional<double> eps_t;    // defaults to eps^2
  bool normalize_time = true;
  std::string checkpoint;         // load instead of building fresh
  std::uint64_t init_seed = 1;
};

struct TrainingConfig {
  std::string objective = "propagator";  // propagator | free_energy
  std::vector<double> x0;
  std::vector<double> xT;
  std::size_t B_train = 128;
  std::size_t M_train = 64;
  int epochs = 2000;
  double lr = 1e-3;
  int validate_every = 50;
  std::size_t B_validate = 2048;
  std::size_t M_validate = 512;
  std::string warm_start;
};

struct EstimatorConfig {
  std::string kind = "propagator";  // propagator | free_energy | correlation
  double eps = 0.05;
  std::vector<double> x0;
  std::vector<double> xT;
  std::size_t paths = 100000;        // propagator paths, or paths per boundary point
  std::size_t M = 1000;              // boundary points
  std::vector<std::pair<int, int>> pairs;
  int bootstrap = 200;
  double c_P = 1.0;
  int runs = 20;                     // benchmark repetitions
  std::vector<std::size_t> checkpoints;
  std::vector<std::string> controls; // benchmark: "bridge" or checkpoint paths
  std::vector<int> N_eval;           // extrapolation targets
  std::size_t chunk = 512;
};

struct OutputConfig {
  std::string dir = "out";
};

struct RunConfig {
  ModelConfig model;
  GridConfig grid;
  ControlConfig control;
  TrainingConfig training;
  EstimatorConfig estimator;
  OutputConfig output;
  std::uint64_t seed = 0;
  int threads = 1;

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  double eps_t() const { return control.eps_t.value_or(estimator.eps * estimator.eps); }
  TimeGrid eval_grid(const ModelSystem& system) const;
  // Fresh or loaded control for this system.
  ControlFunction make_control(const ModelSystem& system) const;
  BoundaryDistribution make_boundary(const ModelSystem& system) const;
  TrainConfig train_config() const;
  EstimatorOptions estimator_options() const;
};

Vector to_vector(const std::vector<double>& v, int dim, const std::string& field);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace pisoc
