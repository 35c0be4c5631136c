#include "pisoc/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace pisoc {

void TrainConfig::check() const {
  if (K_train < 2 || K_eval < 2) throw Error(ErrorKind::Config, "step counts must be >= 2", "grid.K_train");
  if (K_train > K_eval)
    throw Error(ErrorKind::Config, "K_train must not exceed K_eval", "grid.K_train");
  if (B_train < 1) throw Error(ErrorKind::Config, "B_train must be positive", "training.B_train");
  if (objective == Objective::FreeEnergy && M_train < 2)
    throw Error(ErrorKind::Config, "M_train must be >= 2", "training.M_train");
  if (epochs < 0) throw Error(ErrorKind::Config, "epochs must be >= 0", "training.epochs");
  if (!(step_size > 0.0)) throw Error(ErrorKind::Config, "step size must be positive", "training.lr");
  if (validate_every < 1)
    throw Error(ErrorKind::Config, "validation cadence must be positive", "training.validate_every");
  if (!(eps > 0.0)) throw Error(ErrorKind::Config, "eps must be positive", "estimator.eps");
}

namespace {

struct Batch {
  Matrix start;  // [R x n]
  Matrix end;
  Vector log_p;  // per boundary point (free energy)
  std::size_t group = 1;
  std::vector<Matrix> noise;
};

Batch make_batch(const ModelSystem& system, const BoundaryDistribution* boundary,
                 const TrainConfig& cfg, const TimeGrid& grid, int epoch) {
  Batch b;
  const int n = system.dim();
  std::size_t rows = cfg.B_train;
  if (cfg.objective == Objective::PropagatorBound) {
    if (cfg.x0.size() != n || cfg.xT.size() != n)
      throw Error(ErrorKind::Config, "propagator objective needs x0 and xT", "training.x0");
    b.start = cfg.x0.transpose().replicate(static_cast<Eigen::Index>(rows), 1);
    b.end = cfg.xT.transpose().replicate(static_cast<Eigen::Index>(rows), 1);
  } else {
    if (boundary == nullptr)
      throw Error(ErrorKind::Config, "free-energy objective needs a boundary distribution", "boundary");
    b.group = std::max<std::size_t>(1, cfg.B_train / cfg.M_train);
    rows = cfg.M_train * b.group;
    const auto z = boundary->sample(cfg.M_train, cfg.seed, Stream::TrainBoundary,
                                    std::uint64_t(epoch) * cfg.M_train);
    b.log_p = z.log_p;
    b.start.resize(static_cast<Eigen::Index>(rows), n);
    const auto g = static_cast<Eigen::Index>(b.group);
    for (Eigen::Index m = 0; m < z.z.rows(); ++m) b.start.middleRows(m * g, g).rowwise() = z.z.row(m);
    b.end = b.start;
  }
  PathRequest req;
  req.seed = cfg.seed;
  req.stream = Stream::TrainPaths;
  req.first_index = std::uint64_t(epoch) * rows;
  req.count = rows;
  b.noise = draw_increments(grid, n, req);
  return b;
}

template <typename T>
T loss_from_costs(const T& cost, const Batch& b, const ModelSystem& system, const TrainConfig& cfg) {
  if (cfg.objective == Objective::PropagatorBound) return ad::mean_all(cost);
  const T per_z = ad::group_mean(cost, static_cast<Eigen::Index>(b.group));
  const T a = ad::sub(ad::scale(per_z, -1.0), ad::lift(Matrix(b.log_p), cost));
  return ad::scale(ad::logmeanexp(a), -1.0 / system.beta());
}

}  // namespace

ad::Var record_loss(ad::Tape& tape, const std::vector<ad::Var>& params, const ModelSystem& system,
                    const ControlFunction& ctrl, const BoundaryDistribution* boundary,
                    const TrainConfig& cfg, const TimeGrid& grid, int epoch) {
  const Batch b = make_batch(system, boundary, cfg, grid, epoch);
  const ad::Var x0 = tape.constant(b.start);
  const auto cost = integrate_paths<ad::Var>(system, grid, x0, b.end, &ctrl,
                                             std::span<const ad::Var>(params), b.noise, cfg.eps);
  return loss_from_costs(ad::add(cost.running, cost.terminal), b, system, cfg);
}

double evaluate_loss(const std::vector<Matrix>& params, const ModelSystem& system,
                     const ControlFunction& ctrl, const BoundaryDistribution* boundary,
                     const TrainConfig& cfg, const TimeGrid& grid, int epoch) {
  const Batch b = make_batch(system, boundary, cfg, grid, epoch);
  const auto cost = integrate_paths<Matrix>(system, grid, b.start, b.end, &ctrl,
                                            std::span<const Matrix>(params), b.noise, cfg.eps);
  return loss_from_costs<Matrix>(cost.running + cost.terminal, b, system, cfg)(0, 0);
}

namespace {

EstimatorOptions validation_options(const TrainConfig& cfg, std::uint64_t seed) {
  EstimatorOptions opt;
  opt.eps = cfg.eps;
  opt.seed = seed;
  opt.threads = cfg.threads;
  opt.path_stream = Stream::ValidatePaths;
  opt.boundary_stream = Stream::ValidateBoundary;
  if (cfg.objective == Objective::PropagatorBound) {
    opt.paths = cfg.B_validate;
  } else {
    opt.boundary_points = cfg.M_validate;
    opt.paths = std::max<std::size_t>(1, cfg.B_validate / cfg.M_validate);
  }
  return opt;
}

double fine_loss(const ModelSystem& system, const ControlFunction& ctrl,
                 const BoundaryDistribution* boundary, const TrainConfig& cfg, const TimeGrid& fine) {
  const EstimatorOptions opt = validation_options(cfg, cfg.seed);
  if (cfg.objective == Objective::PropagatorBound)
    return sample_propagator(system, fine, cfg.x0, cfg.xT, &ctrl, opt).bound.value;
  return sample_free_energy(system, fine, *boundary, &ctrl, opt).variational.value;
}

}  // namespace

TrainResult train(const ModelSystem& system, ControlFunction ctrl,
                  const BoundaryDistribution* boundary, const TrainConfig& cfg) {
  cfg.check();
  if (cfg.objective == Objective::FreeEnergy && boundary == nullptr)
    throw Error(ErrorKind::Config, "free-energy training needs a boundary distribution", "boundary");
  if (cfg.objective == Objective::PropagatorBound) ctrl.set_endpoint(cfg.xT);
  const TimeGrid coarse = build_time_grid(system.beta(), cfg.K_train, cfg.scheme);
  const TimeGrid fine = build_time_grid(system.beta(), cfg.K_eval, cfg.scheme);

  TrainResult result{ctrl, {}, {}, {}, std::numeric_limits<double>::infinity(), 0, 0};
  AdamState adam;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  nlohmann::json meta = cfg.metadata;
  meta["model"] = system.name();
  meta["beta"] = system.beta();
  meta["N_train"] = system.dim();
  meta["K_train"] = cfg.K_train;
  meta["K_eval"] = cfg.K_eval;
  meta["grid"] = to_string(cfg.scheme);
  meta["seed"] = cfg.seed;
  meta["objective"] = cfg.objective == Objective::PropagatorBound ? "propagator" : "free_energy";

  auto consider = [&](int epoch, double loss) {
    if (!(loss < result.best_loss)) return;
    result.best_loss = loss;
    result.best_history.push_back(loss);
    result.best = ctrl;
    nlohmann::json m = meta;
    m["epoch"] = epoch;
    m["validated_loss"] = loss;
    result.checkpoint = ctrl.to_checkpoint(m);
    if (!cfg.checkpoint_path.empty()) {
      std::ofstream out(cfg.checkpoint_path);
      if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + cfg.checkpoint_path);
      out << result.checkpoint.dump() << '\n';
    }
  };

  {
    CurveRow row;
    row.epoch = 0;
    row.fine_loss = fine_loss(system, ctrl, boundary, cfg, fine);
    row.walltime = elapsed();
    result.curve.push_back(row);
    consider(0, row.fine_loss);
  }

  int consecutive_bad = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    CurveRow row;
    row.epoch = epoch;
    {
      ad::Tape tape;
      std::vector<ad::Var> params;
      for (const Matrix& p : ctrl.parameters()) params.push_back(tape.variable(p));
      const ad::Var loss = record_loss(tape, params, system, ctrl, boundary, cfg, coarse, epoch);
      row.coarse_loss = loss.value()(0, 0);
      if (!std::isfinite(row.coarse_loss)) {
        ++result.nonfinite_losses;
        if (++consecutive_bad >= 3)
          throw Error(ErrorKind::Numerical, "training loss was non-finite three times in a row");
      } else {
        consecutive_bad = 0;
        tape.backward(loss);
        std::vector<Matrix> grads;
        grads.reserve(params.size());
        for (const ad::Var& p : params) grads.push_back(tape.grad(p));
        if (cfg.gradient_hook) cfg.gradient_hook(epoch, grads);
        if (!sgd_step(ctrl.parameters(), grads, adam, cfg.step_size)) ++result.skipped_steps;
      }
    }
    if (epoch % cfg.validate_every == 0 || epoch == cfg.epochs) {
      row.fine_loss = fine_loss(system, ctrl, boundary, cfg, fine);
      consider(epoch, row.fine_loss);
    }
    row.walltime = elapsed();
    result.curve.push_back(row);
  }
  if (!cfg.curve_path.empty()) write_curve(cfg.curve_path, result.curve);
  return result;
}

Validation validate(const ModelSystem& system, const ControlFunction& ctrl,
                    const BoundaryDistribution* boundary, const TrainConfig& cfg,
                    std::uint64_t seed) {
  const TimeGrid fine = build_time_grid(system.beta(), cfg.K_eval, cfg.scheme);
  const EstimatorOptions opt = validation_options(cfg, seed);
  Validation v;
  if (cfg.objective == Objective::PropagatorBound) {
    auto est = sample_propagator(system, fine, cfg.x0, cfg.xT, &ctrl, opt);
    v.variational = est.bound;
    v.direct = est.direct;
    // Work in -log K units so that gap >= 0.
    v.direct.value = -v.direct.value;
  } else {
    if (boundary == nullptr)
      throw Error(ErrorKind::Config, "free-energy validation needs a boundary distribution", "boundary");
    auto est = sample_free_energy(system, fine, *boundary, &ctrl, opt);
    v.variational = est.variational;
    v.direct = est.direct;
  }
  v.gap = v.variational.value - v.direct.value;
  v.gap_std_error = std::hypot(v.variational.std_error, v.direct.std_error);
  return v;
}

void write_curve(const std::string& path, const std::vector<CurveRow>& curve) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write training curve " + path);
  out.precision(12);
  out << "epoch,coarse_loss,fine_loss,walltime\n";
  for (const auto& r : curve) {
    out << r.epoch << ',';
    if (std::isfinite(r.coarse_loss)) out << r.coarse_loss;
    out << ',';
    if (std::isfinite(r.fine_loss)) out << r.fine_loss;
    out << ',' << r.walltime << '\n';
  }
}

}  // namespace pisoc
