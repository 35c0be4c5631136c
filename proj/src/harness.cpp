#include "pisoc/harness.hpp"

#include "pisoc/oracle.hpp"
#include "pisoc/stats.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>

namespace pisoc {

namespace {

void ensure_dir(const Path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message(), "output.dir");
}

void write_json(const Path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::string control_id(const ControlFunction& c) {
  return checkpoint_id(c.to_checkpoint(nlohmann::json::object()));
}

nlohmann::json row_meta(const RunConfig& cfg, const ModelSystem& system, const ControlFunction& c,
                        const TimeGrid& grid) {
  nlohmann::json m{{"model", cfg.model.kind},
                   {"beta", system.beta()},
                   {"N", system.dim()},
                   {"K", grid.steps()},
                   {"eps", cfg.estimator.eps},
                   {"checkpoint_id", control_id(c)},
                   {"control", c.residual_kind()}};
  if (system.is_anharmonic()) m["lambda"] = cfg.model.lambda;
  if (system.is_rotor_chain()) m["J"] = cfg.model.J;
  return m;
}

}  // namespace

void write_snapshot(const RunConfig& cfg, const Path& out) {
  ensure_dir(out);
  write_json(out / "config.resolved.json", cfg.to_json());
}

nlohmann::json error_json(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    nlohmann::json j{{"error", to_string(err->kind())}, {"message", err->what()}};
    if (!err->field().empty()) j["field"] = err->field();
    return j;
  }
  return nlohmann::json{{"error", "internal"}, {"message", e.what()}};
}

// ---- train ----------------------------------------------------------------

nlohmann::json cmd_train(const RunConfig& cfg, const Path& out) {
  write_snapshot(cfg, out);
  const ModelSystem system = cfg.model.build();
  TrainConfig tc = cfg.train_config();
  tc.checkpoint_path = (out / "checkpoint.json").string();
  tc.curve_path = (out / "curve.csv").string();
  ControlFunction ctrl = cfg.make_control(system);
  std::optional<BoundaryDistribution> boundary;
  if (tc.objective == Objective::FreeEnergy) boundary = cfg.make_boundary(system);
  const TrainResult r = train(system, ctrl, boundary ? &*boundary : nullptr, tc);
  std::size_t validations = 0;
  for (const auto& row : r.curve) validations += std::isfinite(row.fine_loss) ? 1 : 0;
  double residual_norm = 0.0;
  for (const Matrix& p : r.best.parameters()) residual_norm += p.squaredNorm();
  return nlohmann::json{{"checkpoint", tc.checkpoint_path},
                        {"curve", tc.curve_path},
                        {"checkpoint_id", r.checkpoint.value("id", "")},
                        {"best_loss", r.best_loss},
                        {"validation_rows", validations},
                        {"skipped_steps", r.skipped_steps},
                        {"nonfinite_losses", r.nonfinite_losses},
                        {"parameter_norm", std::sqrt(residual_norm)}};
}

// ---- sample ---------------------------------------------------------------

nlohmann::json cmd_sample(const RunConfig& cfg, const std::string& kind, const Path& out) {
  const ModelSystem system = cfg.model.build();
  if (kind == "correlation" && !system.is_rotor_chain())
    throw Error(ErrorKind::Config, "correlation functions need a rotor chain", "model.kind");
  if (kind != "propagator" && kind != "free_energy" && kind != "correlation")
    throw Error(ErrorKind::Config, "unknown estimator kind '" + kind + "'", "estimator.kind");
  write_snapshot(cfg, out);
  const TimeGrid grid = cfg.eval_grid(system);
  ControlFunction ctrl = cfg.make_control(system);
  const EstimatorOptions opt = cfg.estimator_options();
  const nlohmann::json meta = row_meta(cfg, system, ctrl, grid);
  std::vector<ResultRow> rows;
  nlohmann::json summary{{"kind", kind}};

  if (kind == "propagator") {
    const Vector x0 = to_vector(cfg.estimator.x0, system.dim(), "estimator.x0");
    const Vector xT = to_vector(cfg.estimator.xT, system.dim(), "estimator.xT");
    ctrl.set_endpoint(xT);
    const auto est = sample_propagator(system, grid, x0, xT, &ctrl, opt);
    EstimateReport kernel = est.direct;
    kernel.value = std::exp(est.direct.value);
    kernel.std_error = kernel.value * est.direct.std_error;
    rows.push_back({"log_propagator", est.direct, meta});
    rows.push_back({"propagator", kernel, meta});
    rows.push_back({"variational_bound", est.bound, meta});
    summary["log_propagator"] = est.direct.to_json();
    summary["propagator"] = kernel.to_json();
    summary["variational_bound"] = est.bound.to_json();
  } else {
    const BoundaryDistribution boundary = cfg.make_boundary(system);
    if (kind == "free_energy") {
      const auto est = sample_free_energy(system, grid, boundary, &ctrl, opt);
      rows.push_back({"free_energy_direct", est.direct, meta});
      rows.push_back({"free_energy_variational", est.variational, meta});
      summary["direct"] = est.direct.to_json();
      summary["variational"] = est.variational.to_json();
    } else {
      auto pairs = cfg.estimator.pairs;
      if (pairs.empty())
        for (int j = 0; j < system.dim(); ++j) pairs.emplace_back(0, j);
      const auto est = correlation_function(system, grid, boundary, &ctrl, pairs, opt);
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        EstimateReport r = est.report;
        r.value = est.value[p];
        r.std_error = est.std_error[p];
        nlohmann::json m = meta;
        m["i"] = pairs[p].first;
        m["j"] = pairs[p].second;
        rows.push_back({"correlation", r, m});
      }
      summary["denominator_flag"] = est.denominator_flag;
      summary["values"] = est.value;
      summary["std_errors"] = est.std_error;
      // Same control, same boundary: the free-energy bound rides along.
      const auto fe = sample_free_energy(system, grid, boundary, &ctrl, opt);
      rows.push_back({"free_energy_variational", fe.variational, meta});
      summary["variational"] = fe.variational.to_json();
    }
  }
  write_results(out, "sample_" + kind, rows, nlohmann::json{{"config", cfg.to_json()}, {"meta", meta}});
  return summary;
}

// ---- benchmark ------------------------------------------------------------

nlohmann::json cmd_benchmark(const RunConfig& cfg, const Path& out) {
  if (cfg.estimator.runs < 2)
    throw Error(ErrorKind::Config, "a spread across runs needs at least 2 runs", "estimator.runs");
  const ModelSystem system = cfg.model.build();
  write_snapshot(cfg, out);
  const TimeGrid grid = cfg.eval_grid(system);
  const BoundaryDistribution boundary = cfg.make_boundary(system);
  std::vector<std::size_t> checkpoints = cfg.estimator.checkpoints;
  if (checkpoints.empty())
    for (std::size_t p = 16; p <= cfg.estimator.M; p *= 2) checkpoints.push_back(p);
  if (checkpoints.empty()) throw Error(ErrorKind::Config, "no checkpoints", "estimator.checkpoints");
  std::vector<std::string> controls = cfg.estimator.controls;
  if (controls.empty()) {
    controls.push_back("bridge");
    if (!cfg.control.checkpoint.empty()) controls.push_back(cfg.control.checkpoint);
  }

  std::ofstream traces(out / "benchmark_traces.csv");
  std::ofstream spread(out / "benchmark_spread.csv");
  if (!traces || !spread) throw Error(ErrorKind::Io, "cannot write benchmark output");
  traces.precision(12);
  spread.precision(12);
  traces << "control,checkpoint_id,run,seed,paths,walltime,free_energy\n";
  spread << "control,checkpoint_id,paths,mean_walltime,mean_free_energy,std_free_energy,relative_std\n";
  nlohmann::json summary{{"controls", nlohmann::json::array()}};
  for (const std::string& name : controls) {
    RunConfig c = cfg;
    if (name == "bridge") {
      c.control.checkpoint.clear();
      c.training.warm_start.clear();
      c.control.residual = "none";
    } else {
      c.control.checkpoint = name;
    }
    const ControlFunction ctrl = c.make_control(system);
    const std::string id = control_id(ctrl);
    std::vector<RunningTrace> runs;
    for (int r = 0; r < cfg.estimator.runs; ++r) {
      EstimatorOptions opt = cfg.estimator_options();
      opt.seed = cfg.seed + 1000003ULL * std::uint64_t(r + 1);
      runs.push_back(running_free_energy(system, grid, boundary, &ctrl, checkpoints, opt));
      const auto& t = runs.back();
      for (std::size_t k = 0; k < t.paths.size(); ++k)
        traces << name << ',' << id << ',' << r << ',' << opt.seed << ',' << t.paths[k] << ','
               << t.walltime[k] << ',' << t.free_energy[k] << '\n';
    }
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      std::vector<double> f;
      std::vector<double> w;
      for (const auto& t : runs) {
        f.push_back(t.free_energy[k]);
        w.push_back(t.walltime[k]);
      }
      const double mf = mean(f);
      const double sf = std::sqrt(sample_variance(f));
      spread << name << ',' << id << ',' << checkpoints[k] << ',' << mean(w) << ',' << mf << ',' << sf
             << ',' << sf / std::abs(mf) << '\n';
      curve.push_back({{"paths", checkpoints[k]}, {"walltime", mean(w)}, {"std", sf}, {"relative_std", sf / std::abs(mf)}});
    }
    summary["controls"].push_back({{"control", name}, {"checkpoint_id", id}, {"curve", curve}});
  }
  return summary;
}

// ---- extrapolate ----------------------------------------------------------

nlohmann::json cmd_extrapolate(const RunConfig& cfg, const Path& out) {
  const ModelSystem base = cfg.model.build();
  if (!base.is_rotor_chain())
    throw Error(ErrorKind::Config, "extrapolation needs a rotor chain", "model.kind");
  if (cfg.control.checkpoint.empty())
    throw Error(ErrorKind::Config, "missing required field", "control.checkpoint");
  const ControlFunction trained = ControlFunction::from_checkpoint(read_json_file(cfg.control.checkpoint));
  if (!trained.size_independent() || !trained.has_residual())
    throw Error(ErrorKind::Architecture,
                "extrapolation needs a size-independent recurrent controller", "control.checkpoint");
  std::vector<int> targets = cfg.estimator.N_eval;
  if (targets.empty()) targets.push_back(base.dim());
  write_snapshot(cfg, out);

  std::vector<ResultRow> rows;
  nlohmann::json summary{{"points", nlohmann::json::array()}};
  for (int n : targets) {
    const ModelSystem system = base.with_sites(n);
    const ControlFunction ctrl = trained.resized(n);
    const TimeGrid grid = cfg.eval_grid(system);
    const BoundaryDistribution boundary = cfg.make_boundary(system);
    const auto est = sample_free_energy(system, grid, boundary, &ctrl, cfg.estimator_options());
    nlohmann::json meta = row_meta(cfg, system, ctrl, grid);
    meta["N_train"] = trained.geometry().dim();
    rows.push_back({"free_energy_direct", est.direct, meta});
    rows.push_back({"free_energy_variational", est.variational, meta});
    summary["points"].push_back({{"N", n},
                                 {"direct", est.direct.value},
                                 {"direct_se", est.direct.std_error},
                                 {"variational", est.variational.value},
                                 {"variational_se", est.variational.std_error},
                                 {"gap", est.variational.value - est.direct.value}});
  }
  write_results(out, "extrapolate", rows, nlohmann::json{{"config", cfg.to_json()}});
  return summary;
}

// ---- oracle ---------------------------------------------------------------

nlohmann::json cmd_oracle(const RunConfig& cfg, const Path& out) {
  const ModelSystem system = cfg.model.build();
  write_snapshot(cfg, out);
  const OracleCache cache(out / "oracle_cache");
  nlohmann::json result;
  if (system.is_anharmonic()) {
    result = cache.get_or_compute(oracle_key("oscillator", system, "converged"), [&] {
      const auto ref = oscillator_reference(system);
      nlohmann::json j{{"free_energy", ref.free_energy},
                       {"ground_energy", ref.ground_energy},
                       {"L", ref.extent},
                       {"G", ref.points},
                       {"change", ref.change}};
      if (!cfg.estimator.x0.empty()) {
        const double x = cfg.estimator.x0.at(0);
        const auto sol = ed_1d(system, ref.extent, ref.points);
        j["x"] = x;
        j["diagonal_density"] = sol.diagonal_density(system.beta(), x);
      }
      return j;
    });
  } else if (system.is_rotor_chain()) {
    result = cache.get_or_compute(oracle_key("rotor", system, "m_max>=8"), [&] {
      const auto ref = rotor_reference(system);
      return nlohmann::json{{"free_energy_per_site", ref.free_energy_per_site},
                            {"m_max", ref.m_max},
                            {"change", ref.change},
                            {"correlations", ref.correlations}};
    });
  } else if (std::holds_alternative<FreeParticle>(system.potential())) {
    const Vector x0 = to_vector(cfg.estimator.x0, system.dim(), "estimator.x0");
    const Vector xT = to_vector(cfg.estimator.xT, system.dim(), "estimator.xT");
    result = nlohmann::json{{"kind", "free_particle_kernel"},
                            {"kernel", free_particle_kernel(x0, xT, system.beta())}};
  } else {
    if (cfg.estimator.x0.empty()) throw Error(ErrorKind::Config, "missing required field", "estimator.x0");
    const Vector x = to_vector(cfg.estimator.x0, 3, "estimator.x0");
    result = nlohmann::json{{"kind", "ground_state_asymptote"},
                            {"r", x.norm()},
                            {"kernel", hydrogen_ground_state_kernel(x.norm(), system.beta())}};
  }
  result["model"] = system.name();
  write_json(out / "oracle.json", result);
  return result;
}

// ---- experiments ----------------------------------------------------------

nlohmann::json Verdict::to_json() const {
  return nlohmann::json{{"name", name},         {"pass", pass},           {"measured", measured},
                        {"std_error", std_error}, {"target", target},     {"deviation", deviation},
                        {"allowed", allowed},   {"runtime_s", runtime},   {"budget_s", budget},
                        {"reasons", reasons}};
}

namespace {

double resolve_target(const nlohmann::json& target, const RunConfig& cfg, const ModelSystem& system) {
  const std::string kind = target.at("kind").get<std::string>();
  // Smoothed targets see the delta through the same terminal Gaussian as the sampler.
  const double smoothing = target.value("smoothed", false) ? cfg.estimator.eps : 0.0;
  if (kind == "value") return target.at("value").get<double>();
  if (kind == "harmonic_free_energy") return harmonic_free_energy(system.beta());
  if (kind == "free_rotor_free_energy") return free_rotor_free_energy(system.beta());
  if (kind == "oscillator_free_energy") {
    const auto ref = oscillator_reference(system);
    if (smoothing == 0.0) return ref.free_energy;
    return ed_1d(system, ref.extent, ref.points).smoothed_free_energy(system.beta(), smoothing);
  }
  if (kind == "rotor_free_energy") return rotor_reference(system).free_energy_per_site;
  const Vector x0 = to_vector(cfg.estimator.x0, system.dim(), "estimator.x0");
  const Vector xT = to_vector(cfg.estimator.xT, system.dim(), "estimator.xT");
  if (kind == "free_particle_kernel") return free_particle_kernel(x0, xT, system.beta());
  if (kind == "harmonic_kernel") return harmonic_kernel(x0[0], xT[0], system.beta());
  if (kind == "oscillator_density") {
    const auto ref = oscillator_reference(system);
    return ed_1d(system, ref.extent, ref.points).diagonal_density(system.beta(), x0[0], smoothing);
  }
  if (kind == "hydrogen_asymptote") return hydrogen_ground_state_kernel(x0.norm(), system.beta());
  throw Error(ErrorKind::Config, "unknown target kind '" + kind + "'", "target.kind");
}

}  // namespace

Verdict run_experiment(const nlohmann::json& manifest, const Path& out) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  v.name = manifest.at("name").get<std::string>();
  v.budget = manifest.value("max_runtime_s", 0.0);
  RunConfig cfg = RunConfig::from_json(manifest.at("config"));
  const Path dir = out / v.name;
  ensure_dir(dir);
  const ModelSystem system = cfg.model.build();
  const std::string pipeline = manifest.at("pipeline").get<std::string>();
  const std::string measure = manifest.value("measure", "direct");
  const std::string relation = manifest.value("relation", "equal");

  if (cfg.control.residual != "none" && cfg.control.checkpoint.empty()) {
    const nlohmann::json t = cmd_train(cfg, dir / "train");
    cfg.control.checkpoint = t.at("checkpoint").get<std::string>();
  }
  const nlohmann::json s = cmd_sample(cfg, pipeline, dir);
  const double per_site = system.is_rotor_chain() ? 1.0 / system.dim() : 1.0;
  double target = resolve_target(manifest.at("target"), cfg, system);
  if (pipeline == "propagator") {
    if (measure == "variational") {
      v.measured = s.at("variational_bound").at("value").get<double>();
      v.std_error = s.at("variational_bound").at("std_error").get<double>();
      target = -std::log(target);
    } else {
      v.measured = s.at("propagator").at("value").get<double>();
      v.std_error = s.at("propagator").at("std_error").get<double>();
    }
  } else {
    const auto& r = s.at(measure == "variational" ? "variational" : "direct");
    v.measured = r.at("value").get<double>() * per_site;
    v.std_error = r.at("std_error").get<double>() * per_site;
  }
  v.target = target;
  v.deviation = v.measured - v.target;

  const auto& tol = manifest.at("tolerance");
  const std::string tk = tol.at("kind").get<std::string>();
  const double tv = tol.at("value").get<double>();
  if (tk == "abs") {
    v.allowed = tv;
  } else if (tk == "rel") {
    v.allowed = tv * std::abs(v.target);
  } else if (tk == "sigma") {
    v.allowed = tv * v.std_error;
  } else {
    throw Error(ErrorKind::Config, "unknown tolerance kind '" + tk + "'", "tolerance.kind");
  }
  const bool within = relation == "upper_bound" ? v.deviation >= -v.allowed
                                                : std::abs(v.deviation) <= v.allowed;
  if (!within) v.reasons.push_back("tolerance violation");
  v.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (v.budget > 0.0 && v.runtime > v.budget) v.reasons.push_back("runtime budget exceeded");
  v.pass = v.reasons.empty();
  write_json(dir / "verdict.json", v.to_json());
  return v;
}

Verdict run_experiment_file(const Path& manifest, const Path& out) {
  return run_experiment(read_json_file(manifest), out);
}

}  // namespace pisoc
