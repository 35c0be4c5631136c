#include "pisoc/sde.hpp"

#include <cmath>
#include <numbers>

namespace pisoc {

GridScheme parse_grid_scheme(const std::string& name) {
  if (name == "uniform") return GridScheme::Uniform;
  if (name == "linear" || name == "linearly_decreasing") return GridScheme::LinearlyDecreasing;
  throw Error(ErrorKind::Config, "unknown grid scheme '" + name + "'", "grid.scheme");
}

const char* to_string(GridScheme scheme) {
  return scheme == GridScheme::Uniform ? "uniform" : "linear";
}

TimeGrid build_time_grid(double total, int steps, GridScheme scheme) {
  if (steps < 2) throw Error(ErrorKind::Config, "time grid needs at least 2 steps", "grid.K");
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorKind::Config, "time grid needs T > 0", "beta");
  TimeGrid g;
  g.total = total;
  g.scheme = scheme;
  g.dt.resize(static_cast<std::size_t>(steps));
  const double k = steps;
  for (int i = 0; i < steps; ++i) {
    g.dt[static_cast<std::size_t>(i)] = scheme == GridScheme::Uniform
                                            ? total / k
                                            : 2.0 * total * (k - i) / (k * (k + 1.0));
  }
  g.t.resize(static_cast<std::size_t>(steps) + 1);
  g.t[0] = 0.0;
  for (std::size_t i = 0; i < g.dt.size(); ++i) g.t[i + 1] = g.t[i] + g.dt[i];
  g.t.back() = total;
  return g;
}

double terminal_penalty(const Vector& x_end, const Vector& x_target, double eps,
                        const Geometry& geometry) {
  if (!(eps > 0.0)) throw Error(ErrorKind::Config, "eps must be positive", "estimator.eps");
  const Vector d = circular_displacement(geometry, x_end, x_target);
  const double n = static_cast<double>(geometry.dim());
  return d.squaredNorm() / (2.0 * eps * eps) +
         0.5 * n * std::log(2.0 * std::numbers::pi * eps * eps);
}

std::vector<Matrix> draw_increments(const TimeGrid& grid, int dim, const PathRequest& request) {
  const auto b = static_cast<Eigen::Index>(request.count);
  std::vector<Matrix> noise(grid.dt.size(), Matrix(b, dim));
  std::vector<double> root(grid.dt.size());
  for (std::size_t k = 0; k < root.size(); ++k) root[k] = std::sqrt(grid.dt[k]);
  std::normal_distribution<double> normal;
  for (Eigen::Index p = 0; p < b; ++p) {
    auto rng = rng_stream(request.seed, request.stream, request.first_index + std::uint64_t(p));
    for (std::size_t k = 0; k < noise.size(); ++k)
      for (int j = 0; j < dim; ++j) noise[k](p, j) = root[k] * normal(rng);
  }
  return noise;
}

namespace {

Matrix expand_rows(const Matrix& m, Eigen::Index rows, int dim, const char* what) {
  if (m.cols() != dim)
    throw Error(ErrorKind::Dimension, std::string(what) + " does not match the geometry");
  if (m.rows() == rows) return m;
  if (m.rows() == 1) return m.replicate(rows, 1);
  throw Error(ErrorKind::Dimension, std::string(what) + " must have 1 or B rows");
}

void check_on_torus(const Geometry& geo, const Matrix& m, const char* what) {
  if (!geo.periodic()) return;
  const double pi = std::numbers::pi;
  if ((m.array() < -pi).any() || (m.array() >= pi).any())
    throw Error(ErrorKind::Config, std::string(what) + " must lie in [-pi, pi)", what);
}

}  // namespace

PathBatch propagate(const ModelSystem& system, const TimeGrid& grid, const Matrix& x0,
                    const Matrix& z, const ControlFunction* control, double eps,
                    const PathRequest& request) {
  if (!(eps > 0.0)) throw Error(ErrorKind::Config, "eps must be positive", "estimator.eps");
  const Geometry& geo = system.geometry();
  if (control != nullptr && !(control->geometry() == geo))
    throw Error(ErrorKind::Dimension, "control geometry differs from the model geometry");
  const auto b = static_cast<Eigen::Index>(request.count);
  const Matrix start = expand_rows(x0, b, geo.dim(), "x0");
  const Matrix end = expand_rows(z, b, geo.dim(), "xT");
  check_on_torus(geo, start, "x0");
  check_on_torus(geo, end, "xT");

  PathBatch batch;
  batch.noises = draw_increments(grid, geo.dim(), request);
  std::vector<Matrix>* pos = request.keep_positions ? &batch.positions : nullptr;
  if (pos) pos->reserve(grid.dt.size() + 1);
  const auto cost = integrate_paths<Matrix>(system, grid, start, end, control,
                                            std::span<const Matrix>(control ? control->parameters()
                                                                            : std::vector<Matrix>{}),
                                            batch.noises, eps, pos);
  batch.cost_running = cost.running.col(0);
  batch.cost_terminal = cost.terminal.col(0);
  batch.valid.assign(request.count, 1);
  for (Eigen::Index p = 0; p < b; ++p) {
    if (!std::isfinite(batch.cost_running[p]) || !std::isfinite(batch.cost_terminal[p])) {
      batch.valid[static_cast<std::size_t>(p)] = 0;
      ++batch.invalid_count;
    }
  }
  return batch;
}

}  // namespace pisoc
