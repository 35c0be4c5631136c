#include "pisoc/estimators.hpp"

#include "pisoc/parallel.hpp"
#include "pisoc/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>

namespace pisoc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

using PathObserver = std::function<void(std::size_t first_row, const PathBatch&)>;

struct CostRun {
  Vector cost;
  std::vector<char> valid;
  std::size_t invalid = 0;
};

// Paths for rows [0, R) of x0/z; row r uses global path index first + r.
CostRun run_paths(const ModelSystem& system, const TimeGrid& grid, const Matrix& x0,
                  const Matrix& z, std::size_t rows, const ControlFunction* control,
                  const EstimatorOptions& opt, std::uint64_t first,
                  const PathObserver& observer = nullptr) {
  CostRun run;
  run.cost.resize(static_cast<Eigen::Index>(rows));
  run.valid.assign(rows, 0);
  const std::size_t chunk = std::max<std::size_t>(opt.chunk, 1);
  const std::size_t chunks = (rows + chunk - 1) / chunk;
  parallel_for(chunks, opt.threads, [&](std::size_t c) {
    const std::size_t r0 = c * chunk;
    const std::size_t count = std::min(chunk, rows - r0);
    PathRequest req;
    req.seed = opt.seed;
    req.stream = opt.path_stream;
    req.first_index = first + r0;
    req.count = count;
    req.keep_positions = static_cast<bool>(observer);
    const auto r0i = static_cast<Eigen::Index>(r0);
    const auto ci = static_cast<Eigen::Index>(count);
    const Matrix xs = x0.rows() == 1 ? x0 : Matrix(x0.middleRows(r0i, ci));
    const Matrix zs = z.rows() == 1 ? z : Matrix(z.middleRows(r0i, ci));
    const PathBatch batch = propagate(system, grid, xs, zs, control, opt.eps, req);
    run.cost.segment(r0i, ci) = batch.total_cost();
    std::copy(batch.valid.begin(), batch.valid.end(), run.valid.begin() + static_cast<long>(r0));
    if (observer) observer(r0, batch);
  });
  for (char v : run.valid) run.invalid += v ? 0 : 1;
  return run;
}

nlohmann::json base_settings(const ModelSystem& system, const TimeGrid& grid,
                             const ControlFunction* control, const EstimatorOptions& opt) {
  return nlohmann::json{{"model", system.name()},
                        {"beta", system.beta()},
                        {"K", grid.steps()},
                        {"grid", to_string(grid.scheme)},
                        {"eps", opt.eps},
                        {"seed", opt.seed},
                        {"control", control ? control->residual_kind() : "zero"},
                        {"eps_t", control ? control->eps_t() : 0.0}};
}

Matrix as_row(const Vector& v) { return v.transpose(); }

}  // namespace

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json j{{"value", value},
                   {"std_error", std_error},
                   {"paths_used", paths_used},
                   {"invalid_paths", invalid_paths},
                   {"walltime", walltime},
                   {"flagged", flagged},
                   {"settings", settings}};
  if (!note.empty()) j["note"] = note;
  return j;
}

// ---- propagator -----------------------------------------------------------

PropagatorEstimate sample_propagator(const ModelSystem& system, const TimeGrid& grid,
                                     const Vector& x0, const Vector& xT,
                                     const ControlFunction* control, const EstimatorOptions& opt) {
  if (opt.paths < 2) throw Error(ErrorKind::Config, "need at least 2 paths", "estimator.paths");
  const auto start = Clock::now();
  const CostRun run = run_paths(system, grid, as_row(x0), as_row(xT), opt.paths, control, opt, 0);
  std::vector<double> costs;
  costs.reserve(opt.paths);
  for (std::size_t i = 0; i < opt.paths; ++i)
    if (run.valid[i]) costs.push_back(run.cost[static_cast<Eigen::Index>(i)]);
  if (costs.size() < 2) throw Error(ErrorKind::Numerical, "all paths were invalid");

  std::vector<double> neg(costs.size());
  std::transform(costs.begin(), costs.end(), neg.begin(), [](double c) { return -c; });
  PropagatorEstimate out;
  const double wall = seconds_since(start);
  auto settings = base_settings(system, grid, control, opt);
  settings["paths"] = opt.paths;

  out.direct.value = log_mean_exp(neg);
  out.direct.std_error = log_mean_exp_std_error(neg);
  out.bound.value = mean(costs);
  out.bound.std_error = std::sqrt(sample_variance(costs) / double(costs.size()));
  for (EstimateReport* r : {&out.direct, &out.bound}) {
    r->paths_used = costs.size();
    r->invalid_paths = run.invalid;
    r->walltime = wall;
    r->settings = settings;
  }
  out.costs = Eigen::Map<const Vector>(costs.data(), static_cast<Eigen::Index>(costs.size()));
  return out;
}

EstimateReport propagator_fk(const ModelSystem& system, const TimeGrid& grid, const Vector& x0,
                             const Vector& xT, const EstimatorOptions& opt) {
  return sample_propagator(system, grid, x0, xT, nullptr, opt).direct;
}

namespace {
const Vector& target_of(const ControlFunction& control) {
  if (!control.endpoint()) throw Error(ErrorKind::Config, "control has no endpoint", "xT");
  return *control.endpoint();
}
}  // namespace

EstimateReport propagator_controlled(const ModelSystem& system, const TimeGrid& grid,
                                     const Vector& x0, const ControlFunction& control,
                                     const EstimatorOptions& opt) {
  return sample_propagator(system, grid, x0, target_of(control), &control, opt).direct;
}

EstimateReport variational_propagator_bound(const ModelSystem& system, const TimeGrid& grid,
                                            const Vector& x0, const ControlFunction& control,
                                            const EstimatorOptions& opt) {
  return sample_propagator(system, grid, x0, target_of(control), &control, opt).bound;
}

// ---- free energy ----------------------------------------------------------

namespace {

// Bootstrap over boundary points of -(1/beta) log(sum_m c_m e^{a_m} / sum_m c_m).
double free_energy_of(std::span<const double> a, std::span<const int> counts, double beta) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < a.size(); ++m)
    if (counts[m] > 0) top = std::max(top, a[m]);
  double s = 0.0;
  double n = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) {
    s += counts[m] * std::exp(a[m] - top);
    n += counts[m];
  }
  return -(top + std::log(s / n)) / beta;
}

EstimateReport free_energy_report(std::span<const double> a, double beta, const EstimatorOptions& opt) {
  EstimateReport r;
  const std::vector<int> ones(a.size(), 1);
  r.value = free_energy_of(a, ones, beta);
  r.std_error = bootstrap_std_error(a.size(), opt.bootstrap, opt.seed,
                                    [&](std::span<const int> c) { return free_energy_of(a, c, beta); });
  return r;
}

struct ClosedPaths {
  BoundaryDistribution::Samples z;
  Matrix rows;  // each z repeated B times
};

ClosedPaths closed_path_starts(const BoundaryDistribution& boundary, const EstimatorOptions& opt) {
  if (opt.boundary_points < 2)
    throw Error(ErrorKind::Config, "need at least 2 boundary points", "estimator.M");
  if (opt.paths < 1) throw Error(ErrorKind::Config, "need at least 1 path per point", "estimator.B");
  ClosedPaths cp;
  cp.z = boundary.sample(opt.boundary_points, opt.seed, opt.boundary_stream);
  const auto b = static_cast<Eigen::Index>(opt.paths);
  cp.rows.resize(cp.z.z.rows() * b, cp.z.z.cols());
  for (Eigen::Index m = 0; m < cp.z.z.rows(); ++m) cp.rows.middleRows(m * b, b).rowwise() = cp.z.z.row(m);
  return cp;
}

}  // namespace

FreeEnergyEstimate sample_free_energy(const ModelSystem& system, const TimeGrid& grid,
                                      const BoundaryDistribution& boundary,
                                      const ControlFunction* control, const EstimatorOptions& opt) {
  if (boundary.dim() != system.dim())
    throw Error(ErrorKind::Dimension, "boundary distribution does not match the model");
  const auto start = Clock::now();
  const ClosedPaths cp = closed_path_starts(boundary, opt);
  const std::size_t rows = static_cast<std::size_t>(cp.rows.rows());
  const CostRun run = run_paths(system, grid, cp.rows, cp.rows, rows, control, opt, 0);

  const std::size_t m_count = opt.boundary_points;
  const std::size_t b = opt.paths;
  std::vector<double> direct_terms;
  std::vector<double> bound_terms;
  FreeEnergyEstimate out;
  out.log_p = cp.z.log_p;
  out.mean_cost = Vector::Constant(static_cast<Eigen::Index>(m_count), std::numeric_limits<double>::quiet_NaN());
  out.log_mean_weight = out.mean_cost;
  std::size_t used = 0;
  std::vector<double> neg;
  for (std::size_t m = 0; m < m_count; ++m) {
    neg.clear();
    double sum = 0.0;
    for (std::size_t i = m * b; i < (m + 1) * b; ++i) {
      if (!run.valid[i]) continue;
      const double c = run.cost[static_cast<Eigen::Index>(i)];
      neg.push_back(-c);
      sum += c;
    }
    if (neg.empty()) continue;
    used += neg.size();
    const auto mi = static_cast<Eigen::Index>(m);
    out.mean_cost[mi] = sum / double(neg.size());
    out.log_mean_weight[mi] = log_mean_exp(neg);
    direct_terms.push_back(out.log_mean_weight[mi] - cp.z.log_p[mi]);
    bound_terms.push_back(-out.mean_cost[mi] - cp.z.log_p[mi]);
  }
  if (direct_terms.size() < 2) throw Error(ErrorKind::Numerical, "all paths were invalid");

  const double beta = system.beta();
  out.direct = free_energy_report(direct_terms, beta, opt);
  out.variational = free_energy_report(bound_terms, beta, opt);
  const double wall = seconds_since(start);
  auto settings = base_settings(system, grid, control, opt);
  settings["M"] = m_count;
  settings["B"] = b;
  settings["boundary"] = boundary.describe();
  settings["error_method"] = "block_bootstrap";
  settings["bootstrap"] = opt.bootstrap;
  for (EstimateReport* r : {&out.direct, &out.variational}) {
    r->paths_used = used;
    r->invalid_paths = run.invalid;
    r->walltime = wall;
    r->settings = settings;
  }
  return out;
}

EstimateReport free_energy_direct(const ModelSystem& system, const TimeGrid& grid,
                                  const BoundaryDistribution& boundary,
                                  const ControlFunction* control, const EstimatorOptions& opt) {
  return sample_free_energy(system, grid, boundary, control, opt).direct;
}

EstimateReport free_energy_variational(const ModelSystem& system, const TimeGrid& grid,
                                       const BoundaryDistribution& boundary,
                                       const ControlFunction* control, const EstimatorOptions& opt) {
  return sample_free_energy(system, grid, boundary, control, opt).variational;
}

// ---- correlation ----------------------------------------------------------

double trapezoid_average(const TimeGrid& grid, std::span<const double> values) {
  if (values.size() != grid.t.size())
    throw Error(ErrorKind::Dimension, "time series length differs from the grid");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < grid.dt.size(); ++k) {
    const double w = 0.5 * grid.dt[k];
    num += w * values[k] + w * values[k + 1];
    den += w * 1.0 + w * 1.0;
  }
  return num / den;
}

CorrelationEstimate correlation_function(const ModelSystem& system, const TimeGrid& grid,
                                         const BoundaryDistribution& boundary,
                                         const ControlFunction* control,
                                         const std::vector<std::pair<int, int>>& pairs,
                                         const EstimatorOptions& opt) {
  if (!system.is_rotor_chain())
    throw Error(ErrorKind::Config, "correlation functions need a rotor chain", "model.kind");
  const int n = system.dim();
  for (auto [i, j] : pairs)
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw Error(ErrorKind::Config, "site pair out of range", "estimator.pairs");
  const auto start = Clock::now();
  const ClosedPaths cp = closed_path_starts(boundary, opt);
  const std::size_t rows = static_cast<std::size_t>(cp.rows.rows());
  const std::size_t np = pairs.size();
  Matrix obs(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(np));

  const PathObserver observe = [&](std::size_t r0, const PathBatch& batch) {
    std::vector<double> series(batch.positions.size());
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      for (std::size_t p = 0; p < np; ++p) {
        const auto [i, j] = pairs[p];
        for (std::size_t k = 0; k < series.size(); ++k)
          series[k] = i == j ? 1.0 : std::cos(batch.positions[k](ri, i) - batch.positions[k](ri, j));
        obs(static_cast<Eigen::Index>(r0 + r), static_cast<Eigen::Index>(p)) = trapezoid_average(grid, series);
      }
    }
  };
  const CostRun run = run_paths(system, grid, cp.rows, cp.rows, rows, control, opt, 0, observe);

  // Per-z sums of w and w * A, relative to the global maximum log-weight.
  const std::size_t m_count = opt.boundary_points;
  const std::size_t b = opt.paths;
  std::vector<double> lw(rows, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!run.valid[r]) continue;
    lw[r] = -run.cost[static_cast<Eigen::Index>(r)] - cp.z.log_p[static_cast<Eigen::Index>(r / b)];
    top = std::max(top, lw[r]);
  }
  if (!std::isfinite(top)) throw Error(ErrorKind::Numerical, "all paths were invalid");
  std::vector<double> s(m_count, 0.0);
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(m_count), static_cast<Eigen::Index>(np));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!run.valid[r]) continue;
    const double w = std::exp(lw[r] - top);
    s[r / b] += w;
    for (std::size_t p = 0; p < np; ++p)
      t(static_cast<Eigen::Index>(r / b), static_cast<Eigen::Index>(p)) +=
          w * obs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p));
  }

  CorrelationEstimate out;
  out.pairs = pairs;
  auto ratio = [&](std::size_t p, std::span<const int> c) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      num += c[m] * t(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
      den += c[m] * s[m];
    }
    return num / den;
  };
  const std::vector<int> ones(m_count, 1);
  for (std::size_t p = 0; p < np; ++p) {
    out.value.push_back(ratio(p, ones));
    out.std_error.push_back(
        bootstrap_std_error(m_count, opt.bootstrap, opt.seed, [&](std::span<const int> c) { return ratio(p, c); }));
  }
  // Normalization: mean of per-z weight sums and its bootstrap spread.
  auto norm = [&](std::span<const int> c) {
    double den = 0.0;
    double cnt = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      den += c[m] * s[m];
      cnt += c[m];
    }
    return den / cnt;
  };
  const double z_hat = norm(ones);
  const double z_se = bootstrap_std_error(m_count, opt.bootstrap, opt.seed, norm);
  out.denominator_flag = !(z_hat > 3.0 * z_se);
  std::size_t used = 0;
  for (char v : run.valid) used += v ? 1 : 0;
  out.report.value = top + std::log(z_hat / double(b));
  out.report.std_error = z_se / z_hat;
  out.report.paths_used = used;
  out.report.invalid_paths = run.invalid;
  out.report.walltime = seconds_since(start);
  out.report.flagged = out.denominator_flag;
  out.report.settings = base_settings(system, grid, control, opt);
  out.report.settings["M"] = m_count;
  out.report.settings["B"] = b;
  out.report.settings["time_average"] = "trapezoid_with_endpoints";
  out.report.settings["boundary"] = boundary.describe();
  if (out.denominator_flag) out.report.note = "normalization estimate consistent with zero";
  return out;
}

// ---- running estimates ----------------------------------------------------

RunningTrace running_free_energy(const ModelSystem& system, const TimeGrid& grid,
                                 const BoundaryDistribution& boundary,
                                 const ControlFunction* control,
                                 const std::vector<std::size_t>& checkpoints,
                                 const EstimatorOptions& opt) {
  if (checkpoints.empty() || !std::is_sorted(checkpoints.begin(), checkpoints.end()))
    throw Error(ErrorKind::Config, "checkpoints must be a non-empty ascending list", "estimator.checkpoints");
  const std::size_t b = std::max<std::size_t>(opt.paths, 1);
  const std::size_t total_z = (checkpoints.back() + b - 1) / b;
  const double beta = system.beta();

  RunningTrace trace;
  LogSumExp acc;
  std::size_t done_z = 0;
  double wall = 0.0;
  std::size_t next_cp = 0;
  while (done_z < total_z) {
    const std::size_t target_z = std::min(total_z, (checkpoints[next_cp] + b - 1) / b);
    const std::size_t step_z = std::max<std::size_t>(1, std::min(target_z - done_z, std::max<std::size_t>(opt.chunk / b, 1)));
    const auto start = Clock::now();
    const auto z = boundary.sample(step_z, opt.seed, opt.boundary_stream, done_z);
    Matrix rows(static_cast<Eigen::Index>(step_z * b), system.dim());
    for (std::size_t m = 0; m < step_z; ++m)
      rows.middleRows(static_cast<Eigen::Index>(m * b), static_cast<Eigen::Index>(b)).rowwise() =
          z.z.row(static_cast<Eigen::Index>(m));
    const CostRun run = run_paths(system, grid, rows, rows, step_z * b, control, opt, done_z * b);
    for (std::size_t m = 0; m < step_z; ++m) {
      LogSumExp inner;
      for (std::size_t i = m * b; i < (m + 1) * b; ++i)
        if (run.valid[i]) inner.add(-run.cost[static_cast<Eigen::Index>(i)]);
      if (inner.count() > 0) acc.add(inner.log_mean() - z.log_p[static_cast<Eigen::Index>(m)]);
    }
    wall += seconds_since(start);
    done_z += step_z;
    while (next_cp < checkpoints.size() && (checkpoints[next_cp] + b - 1) / b <= done_z) {
      trace.paths.push_back(checkpoints[next_cp]);
      trace.walltime.push_back(wall);
      trace.free_energy.push_back(-acc.log_mean() / beta);
      ++next_cp;
    }
  }
  return trace;
}

// ---- output ---------------------------------------------------------------

namespace {
std::string cell(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}
}  // namespace

void write_results(const std::filesystem::path& dir, const std::string& name,
                   const std::vector<ResultRow>& rows, const nlohmann::json& sidecar) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::set<std::string> extra;
  for (const auto& row : rows)
    for (auto it = row.meta.begin(); it != row.meta.end(); ++it) extra.insert(it.key());
  std::ofstream csv(dir / (name + ".csv"));
  if (!csv) throw Error(ErrorKind::Io, "cannot write " + (dir / (name + ".csv")).string());
  csv.precision(12);
  csv << "estimate,value,std_error,paths_used,invalid_paths,walltime,seed";
  for (const auto& k : extra) csv << ',' << k;
  csv << '\n';
  for (const auto& row : rows) {
    const auto& r = row.report;
    csv << row.estimate << ',' << r.value << ',' << r.std_error << ',' << r.paths_used << ','
        << r.invalid_paths << ',' << r.walltime << ',' << r.settings.value("seed", std::uint64_t{0});
    for (const auto& k : extra) csv << ',' << (row.meta.contains(k) ? cell(row.meta[k]) : "");
    csv << '\n';
  }
  nlohmann::json side = sidecar;
  side["rows"] = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = row.report.to_json();
    j["estimate"] = row.estimate;
    j["meta"] = row.meta;
    side["rows"].push_back(j);
  }
  std::ofstream js(dir / (name + ".json"));
  if (!js) throw Error(ErrorKind::Io, "cannot write " + (dir / (name + ".json")).string());
  js << side.dump(2) << '\n';
}

}  // namespace pisoc
