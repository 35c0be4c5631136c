#include "pisoc/control.hpp"

#include <cstdio>

namespace pisoc {

ControlFunction::ControlFunction(Geometry geometry, double eps_t)
    : geometry_(geometry), eps_t_(eps_t) {
  if (!(eps_t > 0.0)) throw Error(ErrorKind::Config, "eps_t must be positive", "control.eps_t");
}

ControlFunction ControlFunction::with_mlp(Geometry geometry, double eps_t, std::vector<int> hidden,
                                          std::uint64_t seed) {
  ControlFunction c(geometry, eps_t);
  const int n = geometry.dim();
  const int inputs = geometry.periodic() ? 4 * n + 1 : 2 * n + 1;
  c.residual_ = MlpController(inputs, std::move(hidden), n, seed);
  return c;
}

ControlFunction ControlFunction::with_birecurrent(Geometry geometry, double eps_t, int hidden,
                                                  std::uint64_t seed) {
  if (!geometry.periodic())
    throw Error(ErrorKind::Architecture, "the recurrent controller needs a rotor chain",
                "control.residual");
  ControlFunction c(geometry, eps_t);
  c.residual_ = BiRecurrentController(5, hidden, seed);
  return c;
}

void ControlFunction::set_residual(Residual r) {
  if (const auto* mlp = std::get_if<MlpController>(&r)) {
    const int n = geometry_.dim();
    const int inputs = geometry_.periodic() ? 4 * n + 1 : 2 * n + 1;
    if (mlp->input_dim() != inputs || mlp->output_dim() != n)
      throw Error(ErrorKind::Architecture, "MLP dimensions do not fit this geometry");
  } else if (const auto* rnn = std::get_if<BiRecurrentController>(&r)) {
    if (!geometry_.periodic() || rnn->features_per_site() != 5)
      throw Error(ErrorKind::Architecture, "recurrent controller needs a torus and 5 features");
  }
  residual_ = std::move(r);
}

std::string ControlFunction::residual_kind() const {
  if (std::holds_alternative<MlpController>(residual_)) return "mlp";
  if (std::holds_alternative<BiRecurrentController>(residual_)) return "birecurrent";
  return "none";
}

std::vector<Matrix>& ControlFunction::parameters() {
  static thread_local std::vector<Matrix> none;
  none.clear();
  if (auto* mlp = std::get_if<MlpController>(&residual_)) return mlp->parameters();
  if (auto* rnn = std::get_if<BiRecurrentController>(&residual_)) return rnn->parameters();
  return none;
}

const std::vector<Matrix>& ControlFunction::parameters() const {
  static const std::vector<Matrix> none;
  if (const auto* mlp = std::get_if<MlpController>(&residual_)) return mlp->parameters();
  if (const auto* rnn = std::get_if<BiRecurrentController>(&residual_)) return rnn->parameters();
  return none;
}

void ControlFunction::set_endpoint(const Vector& z) {
  if (z.size() != geometry_.dim())
    throw Error(ErrorKind::Dimension, "endpoint does not match the geometry");
  endpoint_ = z;
}

ControlFunction ControlFunction::resized(int sites) const {
  if (!geometry_.periodic())
    throw Error(ErrorKind::Architecture, "only rotor-chain controllers can be resized");
  if (!size_independent())
    throw Error(ErrorKind::Architecture,
                "an MLP residual is tied to the chain length it was built for", "checkpoint");
  ControlFunction c(Geometry::torus(sites), eps_t_);
  c.bridge_ = bridge_;
  c.normalize_time_ = normalize_time_;
  c.residual_ = residual_;
  return c;
}

json ControlFunction::to_checkpoint(const json& metadata) const {
  json arch;
  if (const auto* mlp = std::get_if<MlpController>(&residual_)) {
    arch = mlp->architecture();
  } else if (const auto* rnn = std::get_if<BiRecurrentController>(&residual_)) {
    arch = rnn->architecture();
  } else {
    arch = json{{"kind", "none"}};
  }
  json doc;
  doc["format_version"] = 1;
  doc["architecture"] = arch;
  doc["control"] = json{{"geometry", geometry_.periodic() ? "torus" : "cartesian"},
                        {"dim", geometry_.dim()},
                        {"eps_t", eps_t_},
                        {"bridge", bridge_},
                        {"normalize_time", normalize_time_}};
  doc["parameters"] = parameters_to_json(parameters());
  doc["metadata"] = metadata;
  doc["id"] = checkpoint_id(doc);
  return doc;
}

ControlFunction ControlFunction::from_checkpoint(const json& doc) {
  const json& ctl = doc.at("control");
  const int dim = ctl.at("dim").get<int>();
  const std::string g = ctl.at("geometry").get<std::string>();
  return from_checkpoint(doc, g == "torus" ? Geometry::torus(dim) : Geometry::cartesian(dim));
}

ControlFunction ControlFunction::from_checkpoint(const json& doc, const Geometry& expected) {
  if (doc.value("format_version", 0) != 1)
    throw Error(ErrorKind::Architecture, "unsupported checkpoint format", "format_version");
  const json& arch = doc.at("architecture");
  const json& ctl = doc.at("control");
  const std::string kind = arch.at("kind").get<std::string>();
  const bool torus = ctl.at("geometry").get<std::string>() == "torus";
  if (torus != expected.periodic())
    throw Error(ErrorKind::Architecture, "checkpoint geometry differs from the model", "control.geometry");
  const int dim = ctl.at("dim").get<int>();
  if (kind != "birecurrent" && dim != expected.dim())
    throw Error(ErrorKind::Architecture, "checkpoint was built for dimension " + std::to_string(dim),
                "control.dim");

  ControlFunction c(expected, ctl.at("eps_t").get<double>());
  c.bridge_ = ctl.value("bridge", true);
  c.normalize_time_ = ctl.value("normalize_time", true);
  if (kind == "mlp") {
    c.set_residual(MlpController::from_architecture(arch));
  } else if (kind == "birecurrent") {
    c.set_residual(BiRecurrentController::from_architecture(arch));
  } else if (kind != "none") {
    throw Error(ErrorKind::Architecture, "unknown controller kind '" + kind + "'",
                "architecture.kind");
  }
  parameters_from_json(doc.at("parameters"), c.parameters());
  return c;
}

std::string checkpoint_id(const json& checkpoint) {
  const std::string text = checkpoint.at("parameters").dump() + checkpoint.at("architecture").dump() +
                           checkpoint.at("control").dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vector evaluate_control(const ControlFunction& ctrl, const Vector& x, double t, double total) {
  if (!ctrl.endpoint()) throw Error(ErrorKind::Config, "control has no endpoint", "z");
  if (!(t < total)) throw Error(ErrorKind::Config, "control evaluated at t >= T", "t");
  const Matrix xr = x.transpose();
  const Matrix zr = ctrl.endpoint()->transpose();
  return ctrl.drift(xr, zr, t, total).row(0).transpose();
}

Matrix features(const Vector& x, const Vector& z, double t, double total, const Geometry& geometry,
                bool normalize_time) {
  if (x.size() != geometry.dim() || z.size() != geometry.dim())
    throw Error(ErrorKind::Dimension, "feature inputs do not match the geometry");
  const double tau = normalize_time ? t / total : t;
  const int n = geometry.dim();
  if (!geometry.periodic()) {
    Matrix f(1, 2 * n + 1);
    f << x.transpose(), z.transpose(), tau;
    return f;
  }
  Matrix f(n, 5);
  for (int i = 0; i < n; ++i)
    f.row(i) << std::sin(x[i]), std::cos(x[i]), std::sin(z[i]), std::cos(z[i]), tau;
  return f;
}

}  // namespace pisoc
