#include "pisoc/config.hpp"

#include <fstream>
#include <set>

namespace pisoc {

namespace {

// Reads one JSON object, tracking which keys were consumed so that leftovers
// can be reported as unknown.
class Block {
 public:
  Block(const nlohmann::json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw Error(ErrorKind::Config, "expected an object", path_);
  }

  template <typename T>
  void optional(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key) || doc_[key].is_null()) return;
    try {
      out = doc_[key].get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::Config, "field has the wrong type", field(key));
    }
  }

  template <typename T>
  void required(const char* key, T& out) {
    if (!doc_.contains(key) || doc_[key].is_null())
      throw Error(ErrorKind::Config, "missing required field", field(key));
    optional(key, out);
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_[key] : nullptr;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it)
      if (!seen_.count(it.key())) throw Error(ErrorKind::Config, "unknown key", field(it.key()));
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const nlohmann::json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ModelSystem ModelConfig::build() const {
  if (kind == "free") return ModelSystem::free_particle(N, beta);
  if (kind == "anharmonic") return ModelSystem::anharmonic(lambda, beta);
  if (kind == "coulomb") return ModelSystem::coulomb(beta, r_cut);
  if (kind == "rotor") {
    ChainBoundary b;
    if (boundary == "open") {
      b = ChainBoundary::Open;
    } else if (boundary == "periodic") {
      b = ChainBoundary::Periodic;
    } else {
      throw Error(ErrorKind::Config, "boundary must be open or periodic", "model.boundary");
    }
    return ModelSystem::rotor_chain(N, J, beta, b);
  }
  throw Error(ErrorKind::Config, "unknown model kind '" + kind + "'", "model.kind");
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  RunConfig c;
  Block top(doc, "");
  top.optional("seed", c.seed);
  top.optional("threads", c.threads);

  const nlohmann::json* m = top.child("model");
  if (m == nullptr) throw Error(ErrorKind::Config, "missing required block", "model");
  {
    Block b(*m, "model");
    b.required("kind", c.model.kind);
    b.required("beta", c.model.beta);
    b.optional("lambda", c.model.lambda);
    b.optional("r_cut", c.model.r_cut);
    b.optional("J", c.model.J);
    b.optional("N", c.model.N);
    b.optional("boundary", c.model.boundary);
    b.finish();
  }
  if (const auto* g = top.child("grid")) {
    Block b(*g, "grid");
    b.optional("scheme", c.grid.scheme);
    b.optional("K_train", c.grid.K_train);
    b.optional("K_eval", c.grid.K_eval);
    b.finish();
  }
  if (const auto* ctl = top.child("control")) {
    Block b(*ctl, "control");
    b.optional("residual", c.control.residual);
    b.optional("hidden", c.control.hidden);
    b.optional("H", c.control.H);
    double eps_t = 0.0;
    b.optional("eps_t", eps_t);
    if (ctl->contains("eps_t") && !(*ctl)["eps_t"].is_null()) c.control.eps_t = eps_t;
    b.optional("normalize_time", c.control.normalize_time);
    b.optional("checkpoint", c.control.checkpoint);
    b.optional("init_seed", c.control.init_seed);
    b.finish();
  }
  if (const auto* t = top.child("training")) {
    Block b(*t, "training");
    b.optional("objective", c.training.objective);
    b.optional("x0", c.training.x0);
    b.optional("xT", c.training.xT);
    b.optional("B_train", c.training.B_train);
    b.optional("M_train", c.training.M_train);
    b.optional("epochs", c.training.epochs);
    b.optional("lr", c.training.lr);
    b.optional("validate_every", c.training.validate_every);
    b.optional("B_validate", c.training.B_validate);
    b.optional("M_validate", c.training.M_validate);
    b.optional("warm_start", c.training.warm_start);
    b.finish();
  }
  if (const auto* e = top.child("estimator")) {
    Block b(*e, "estimator");
    b.optional("kind", c.estimator.kind);
    b.optional("eps", c.estimator.eps);
    b.optional("x0", c.estimator.x0);
    b.optional("xT", c.estimator.xT);
    b.optional("paths", c.estimator.paths);
    b.optional("M", c.estimator.M);
    std::vector<std::vector<int>> pairs;
    b.optional("pairs", pairs);
    for (const auto& p : pairs) {
      if (p.size() != 2) throw Error(ErrorKind::Config, "pairs must be [i, j]", "estimator.pairs");
      c.estimator.pairs.emplace_back(p[0], p[1]);
    }
    b.optional("bootstrap", c.estimator.bootstrap);
    b.optional("c_P", c.estimator.c_P);
    b.optional("runs", c.estimator.runs);
    b.optional("checkpoints", c.estimator.checkpoints);
    b.optional("controls", c.estimator.controls);
    b.optional("N_eval", c.estimator.N_eval);
    b.optional("chunk", c.estimator.chunk);
    b.finish();
  }
  if (const auto* o = top.child("output")) {
    Block b(*o, "output");
    b.optional("dir", c.output.dir);
    b.finish();
  }
  top.finish();
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string(), "config");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("malformed JSON: ") + e.what(), "config");
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

nlohmann::json RunConfig::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (auto [i, j] : estimator.pairs) pairs.push_back({i, j});
  return nlohmann::json{
      {"seed", seed},
      {"threads", threads},
      {"model",
       {{"kind", model.kind},
        {"beta", model.beta},
        {"lambda", model.lambda},
        {"r_cut", model.r_cut},
        {"J", model.J},
        {"N", model.N},
        {"boundary", model.boundary}}},
      {"grid", {{"scheme", grid.scheme}, {"K_train", grid.K_train}, {"K_eval", grid.K_eval}}},
      {"control",
       {{"residual", control.residual},
        {"hidden", control.hidden},
        {"H", control.H},
        {"eps_t", eps_t()},
        {"normalize_time", control.normalize_time},
        {"checkpoint", control.checkpoint},
        {"init_seed", control.init_seed}}},
      {"training",
       {{"objective", training.objective},
        {"x0", training.x0},
        {"xT", training.xT},
        {"B_train", training.B_train},
        {"M_train", training.M_train},
        {"epochs", training.epochs},
        {"lr", training.lr},
        {"validate_every", training.validate_every},
        {"B_validate", training.B_validate},
        {"M_validate", training.M_validate},
        {"warm_start", training.warm_start}}},
      {"estimator",
       {{"kind", estimator.kind},
        {"eps", estimator.eps},
        {"x0", estimator.x0},
        {"xT", estimator.xT},
        {"paths", estimator.paths},
        {"M", estimator.M},
        {"pairs", pairs},
        {"bootstrap", estimator.bootstrap},
        {"c_P", estimator.c_P},
        {"runs", estimator.runs},
        {"checkpoints", estimator.checkpoints},
        {"controls", estimator.controls},
        {"N_eval", estimator.N_eval},
        {"chunk", estimator.chunk}}},
      {"output", {{"dir", output.dir}}}};
}

TimeGrid RunConfig::eval_grid(const ModelSystem& system) const {
  return build_time_grid(system.beta(), grid.K_eval, parse_grid_scheme(grid.scheme));
}

ControlFunction RunConfig::make_control(const ModelSystem& system) const {
  const std::string& path = !control.checkpoint.empty() ? control.checkpoint : training.warm_start;
  if (!path.empty()) {
    const nlohmann::json doc = read_json_file(path);
    const int dim = doc.at("control").at("dim").get<int>();
    ControlFunction c = ControlFunction::from_checkpoint(
        doc, system.geometry().periodic() ? Geometry::torus(dim) : Geometry::cartesian(dim));
    if (c.geometry().dim() != system.dim()) c = c.resized(system.dim());
    return c;
  }
  const Geometry& g = system.geometry();
  ControlFunction c(g, eps_t());
  if (control.residual == "mlp") {
    c = ControlFunction::with_mlp(g, eps_t(), control.hidden, control.init_seed);
  } else if (control.residual == "birecurrent") {
    c = ControlFunction::with_birecurrent(g, eps_t(), control.H, control.init_seed);
  } else if (control.residual != "none") {
    throw Error(ErrorKind::Config, "unknown residual '" + control.residual + "'", "control.residual");
  }
  c.set_normalize_time(control.normalize_time);
  return c;
}

BoundaryDistribution RunConfig::make_boundary(const ModelSystem& system) const {
  return BoundaryDistribution::for_system(system, estimator.c_P);
}

Vector to_vector(const std::vector<double>& v, int dim, const std::string& field) {
  if (v.empty()) throw Error(ErrorKind::Config, "missing required field", field);
  if (static_cast<int>(v.size()) != dim)
    throw Error(ErrorKind::Config, "expected " + std::to_string(dim) + " components", field);
  return Eigen::Map<const Vector>(v.data(), dim);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  if (training.objective == "propagator") {
    t.objective = Objective::PropagatorBound;
  } else if (training.objective == "free_energy") {
    t.objective = Objective::FreeEnergy;
  } else {
    throw Error(ErrorKind::Config, "unknown objective '" + training.objective + "'", "training.objective");
  }
  const ModelSystem system = model.build();
  if (t.objective == Objective::PropagatorBound) {
    t.x0 = to_vector(training.x0, system.dim(), "training.x0");
    t.xT = to_vector(training.xT, system.dim(), "training.xT");
  }
  t.K_train = grid.K_train;
  t.K_eval = grid.K_eval;
  t.scheme = parse_grid_scheme(grid.scheme);
  t.B_train = training.B_train;
  t.M_train = training.M_train;
  t.epochs = training.epochs;
  t.step_size = training.lr;
  t.seed = seed;
  t.validate_every = training.validate_every;
  t.B_validate = training.B_validate;
  t.M_validate = training.M_validate;
  t.eps = estimator.eps;
  t.threads = threads;
  t.metadata = nlohmann::json{{"config", to_json()}};
  return t;
}

EstimatorOptions RunConfig::estimator_options() const {
  EstimatorOptions o;
  o.eps = estimator.eps;
  o.paths = estimator.paths;
  o.boundary_points = estimator.M;
  o.seed = seed;
  o.threads = threads;
  o.chunk = estimator.chunk;
  o.bootstrap = estimator.bootstrap;
  return o;
}

}  // namespace pisoc
