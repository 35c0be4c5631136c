#pragma once

// Propagator, free-energy and correlation estimators over controlled paths.

#include "pisoc/boundary.hpp"
#include "pisoc/control.hpp"
#include "pisoc/sde.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pisoc {

struct EstimateReport {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t paths_used = 0;
  std::size_t invalid_paths = 0;
  double walltime = 0.0;
  bool flagged = false;
  std::string note;
  nlohmann::json settings = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct EstimatorOptions {
  double eps = 0.05;            // terminal smoothing width
  std::size_t paths = 10000;    // propagator: paths; free energy: paths per boundary point
  std::size_t boundary_points = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t chunk = 512;
  int bootstrap = 200;
  Stream path_stream = Stream::Paths;
  Stream boundary_stream = Stream::Boundary;
};

// ---- propagator -----------------------------------------------------------

struct PropagatorEstimate {
  EstimateReport direct;  // log K from the mean of exp(-C)
  EstimateReport bound;   // E[C] >= -log K
  Vector costs;           // C of every valid path
};

/// Shared paths for both estimates. `control` may be null (Feynman-Kac).
PropagatorEstimate sample_propagator(const ModelSystem& system, const TimeGrid& grid,
                                     const Vector& x0, const Vector& xT,
                                     const ControlFunction* control, const EstimatorOptions& opt);

EstimateReport propagator_fk(const ModelSystem& system, const TimeGrid& grid, const Vector& x0,
                             const Vector& xT, const EstimatorOptions& opt);
// The control's endpoint is the target x_T.
EstimateReport propagator_controlled(const ModelSystem& system, const TimeGrid& grid,
                                     const Vector& x0, const ControlFunction& control,
                                     const EstimatorOptions& opt);
EstimateReport variational_propagator_bound(const ModelSystem& system, const TimeGrid& grid,
                                            const Vector& x0, const ControlFunction& control,
                                            const EstimatorOptions& opt);

// ---- free energy ----------------------------------------------------------

struct FreeEnergyEstimate {
  EstimateReport direct;       // F = -(1/beta) log Z
  EstimateReport variational;  // F_theta >= F
  Vector log_p;                // log P(z) per boundary point
  Vector mean_cost;            // per-z path mean of C
  Vector log_mean_weight;      // per-z log mean exp(-C)
};

/// M = opt.boundary_points closed paths bases z ~ P, opt.paths paths each.
FreeEnergyEstimate sample_free_energy(const ModelSystem& system, const TimeGrid& grid,
                                      const BoundaryDistribution& boundary,
                                      const ControlFunction* control, const EstimatorOptions& opt);

EstimateReport free_energy_direct(const ModelSystem& system, const TimeGrid& grid,
                                  const BoundaryDistribution& boundary,
                                  const ControlFunction* control, const EstimatorOptions& opt);
EstimateReport free_energy_variational(const ModelSystem& system, const TimeGrid& grid,
                                       const BoundaryDistribution& boundary,
                                       const ControlFunction* control, const EstimatorOptions& opt);

// ---- correlation ----------------------------------------------------------

struct CorrelationEstimate {
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> value;
  std::vector<double> std_error;
  bool denominator_flag = false;  // normalization consistent with zero
  EstimateReport report;          // bookkeeping; value holds log Z estimate
};

/// Time-averaged, reweighted <cos(theta_i - theta_j)> over closed paths.
CorrelationEstimate correlation_function(const ModelSystem& system, const TimeGrid& grid,
                                         const BoundaryDistribution& boundary,
                                         const ControlFunction* control,
                                         const std::vector<std::pair<int, int>>& pairs,
                                         const EstimatorOptions& opt);

/// Trapezoid time average of f over the grid nodes (both endpoints included).
double trapezoid_average(const TimeGrid& grid, std::span<const double> values);

// ---- running estimates ----------------------------------------------------

struct RunningTrace {
  std::vector<std::size_t> paths;
  std::vector<double> walltime;
  std::vector<double> free_energy;
};

/// Running direct free-energy estimate after each checkpoint path count.
RunningTrace running_free_energy(const ModelSystem& system, const TimeGrid& grid,
                                 const BoundaryDistribution& boundary,
                                 const ControlFunction* control,
                                 const std::vector<std::size_t>& checkpoints,
                                 const EstimatorOptions& opt);

// ---- output ---------------------------------------------------------------

struct ResultRow {
  std::string estimate;
  EstimateReport report;
  nlohmann::json meta = nlohmann::json::object();
};

/// name.csv with one row per estimate plus a name.json sidecar.
void write_results(const std::filesystem::path& dir, const std::string& name,
                   const std::vector<ResultRow>& rows, const nlohmann::json& sidecar);

}  // namespace pisoc
