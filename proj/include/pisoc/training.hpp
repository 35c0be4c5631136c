#pragma once

// Variational training of the residual control by backpropagating through
// the discretized SDE on a coarse grid, validated on a fine grid.

#include "pisoc/boundary.hpp"
#include "pisoc/control.hpp"
#include "pisoc/estimators.hpp"
#include "pisoc/sde.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace pisoc {

enum class Objective { PropagatorBound, FreeEnergy };

struct TrainConfig {
  Objective objective = Objective::PropagatorBound;
  Vector x0;  // propagator objective only
  Vector xT;
  int K_train = 64;
  int K_eval = 256;
  GridScheme scheme = GridScheme::LinearlyDecreasing;
  std::size_t B_train = 128;  // paths per step
  std::size_t M_train = 64;   // boundary points per step (free energy)
  int epochs = 2000;
  double step_size = 1e-3;
  std::uint64_t seed = 0;
  int validate_every = 50;
  std::size_t B_validate = 2048;  // propagator paths, or paths per point times M_validate
  std::size_t M_validate = 512;
  double eps = 0.05;
  int threads = 1;
  std::string checkpoint_path;  // written whenever the best loss improves
  std::string curve_path;
  nlohmann::json metadata = nlohmann::json::object();
  // Called with the gradients before each optimizer step (diagnostics and tests).
  std::function<void(int epoch, std::vector<Matrix>& grads)> gradient_hook;

  void check() const;
};

struct CurveRow {
  int epoch = 0;
  double coarse_loss = std::numeric_limits<double>::quiet_NaN();
  double fine_loss = std::numeric_limits<double>::quiet_NaN();
  double walltime = 0.0;
};

struct TrainResult {
  ControlFunction best;
  nlohmann::json checkpoint;
  std::vector<CurveRow> curve;
  std::vector<double> best_history;  // validated loss at each improvement
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t skipped_steps = 0;      // non-finite gradients
  std::size_t nonfinite_losses = 0;
};

/// One coarse-grid loss evaluation recorded on `tape`; returns the loss node.
/// Exposed for gradient checks.
ad::Var record_loss(ad::Tape& tape, const std::vector<ad::Var>& params, const ModelSystem& system,
                    const ControlFunction& ctrl, const BoundaryDistribution* boundary,
                    const TrainConfig& cfg, const TimeGrid& grid, int epoch);

/// Same loss evaluated without a tape, with explicit parameter values.
double evaluate_loss(const std::vector<Matrix>& params, const ModelSystem& system,
                     const ControlFunction& ctrl, const BoundaryDistribution* boundary,
                     const TrainConfig& cfg, const TimeGrid& grid, int epoch);

TrainResult train(const ModelSystem& system, ControlFunction ctrl,
                  const BoundaryDistribution* boundary, const TrainConfig& cfg);

struct Validation {
  EstimateReport variational;  // E[C] (propagator) or F_theta
  EstimateReport direct;       // -log K (propagator) or F
  double gap = 0.0;            // variational - direct, both in the same units
  double gap_std_error = 0.0;
};

/// Fine-grid variational and direct estimates with fresh seeds.
Validation validate(const ModelSystem& system, const ControlFunction& ctrl,
                    const BoundaryDistribution* boundary, const TrainConfig& cfg,
                    std::uint64_t seed);

void write_curve(const std::string& path, const std::vector<CurveRow>& curve);

}  // namespace pisoc
