#pragma once

// Drift u(x, t | z) = bridge(x, t | z) + residual(features(x, z, t)).

#include "pisoc/model.hpp"
#include "pisoc/nn.hpp"

#include <optional>
#include <string>
#include <variant>

namespace pisoc {

using Residual = std::variant<std::monostate, MlpController, BiRecurrentController>;

class ControlFunction {
 public:
  // Pure bridge. eps_t regularizes the 1/(T - t) singularity at the end.
  ControlFunction(Geometry geometry, double eps_t);

  static ControlFunction with_mlp(Geometry geometry, double eps_t, std::vector<int> hidden,
                                  std::uint64_t seed);
  static ControlFunction with_birecurrent(Geometry geometry, double eps_t, int hidden,
                                          std::uint64_t seed);

  const Geometry& geometry() const { return geometry_; }
  double eps_t() const { return eps_t_; }
  bool bridge_enabled() const { return bridge_; }
  void set_bridge_enabled(bool on) { bridge_ = on; }
  bool normalize_time() const { return normalize_time_; }
  void set_normalize_time(bool on) { normalize_time_ = on; }

  const Residual& residual() const { return residual_; }
  void set_residual(Residual r);
  bool has_residual() const { return !std::holds_alternative<std::monostate>(residual_); }
  bool size_independent() const {
    return !std::holds_alternative<MlpController>(residual_);
  }
  std::string residual_kind() const;

  // Empty for a pure bridge.
  std::vector<Matrix>& parameters();
  const std::vector<Matrix>& parameters() const;

  // Endpoint z used by the single-configuration API.
  const std::optional<Vector>& endpoint() const { return endpoint_; }
  void set_endpoint(const Vector& z);

  // Same controller on a chain of a different length (size-independent
  // residuals only).
  ControlFunction resized(int sites) const;

  // Batched drift. x and z are [B x n]; p are the residual parameters in the
  // value domain of x.
  template <typename T>
  T drift(const T& x, const Matrix& z, double t, double total, std::span<const T> p) const;

  Matrix drift(const Matrix& x, const Matrix& z, double t, double total) const {
    return drift<Matrix>(x, z, t, total, std::span<const Matrix>(parameters()));
  }

  // Checkpoint document; `metadata` is stored verbatim.
  json to_checkpoint(const json& metadata) const;
  static ControlFunction from_checkpoint(const json& doc);
  static ControlFunction from_checkpoint(const json& doc, const Geometry& expected);

 private:
  Geometry geometry_;
  double eps_t_;
  bool bridge_ = true;
  bool normalize_time_ = true;
  Residual residual_;
  std::optional<Vector> endpoint_;
};

// Stable identifier of a checkpoint's parameters (FNV-1a of the serialized
// arrays), carried in every output row.
std::string checkpoint_id(const json& checkpoint);

/// Drift at one configuration, using the stored endpoint.
Vector evaluate_control(const ControlFunction& ctrl, const Vector& x, double t, double total);

/// Network inputs. Cartesian: [x | z | tau] as one row. Torus: one row per
/// site of (sin x, cos x, sin z, cos z, tau).
Matrix features(const Vector& x, const Vector& z, double t, double total, const Geometry& geometry,
                bool normalize_time = true);

namespace detail {

template <typename T>
T time_column(const T& like, double tau) {
  return ad::lift(Matrix::Constant(like.rows(), 1, tau), like);
}

}  // namespace detail

template <typename T>
T ControlFunction::drift(const T& x, const Matrix& z, double t, double total,
                         std::span<const T> p) const {
  if (x.cols() != geometry_.dim() || z.cols() != geometry_.dim() || z.rows() != x.rows())
    throw Error(ErrorKind::Dimension, "drift inputs do not match the geometry");
  if (!(t < total) || t < 0.0) throw Error(ErrorKind::Config, "control evaluated outside [0, T)", "t");

  T u{};
  bool have = false;
  if (bridge_) {
    const T d = displacement_batch(geometry_, ad::lift(z, x), x);
    u = ad::scale(d, 1.0 / (total - t + eps_t_));
    have = true;
  }
  if (has_residual()) {
    const double tau = normalize_time_ ? t / total : t;
    T r{};
    if (const auto* mlp = std::get_if<MlpController>(&residual_)) {
      if (geometry_.periodic()) {
        const T parts[5] = {ad::sin(x), ad::cos(x), ad::lift(Matrix(z.array().sin()), x),
                            ad::lift(Matrix(z.array().cos()), x), detail::time_column(x, tau)};
        r = mlp->forward<T>(ad::concat_cols(std::span<const T>(parts, 5)), p);
      } else {
        const T parts[3] = {x, ad::lift(z, x), detail::time_column(x, tau)};
        r = mlp->forward<T>(ad::concat_cols(std::span<const T>(parts, 3)), p);
      }
    } else {
      const auto& rnn = std::get<BiRecurrentController>(residual_);
      const int n = geometry_.dim();
      const T sx = ad::sin(x);
      const T cx = ad::cos(x);
      const Matrix sz = z.array().sin();
      const Matrix cz = z.array().cos();
      const T tc = detail::time_column(x, tau);
      std::vector<T> sites;
      sites.reserve(n);
      for (int i = 0; i < n; ++i) {
        const T parts[5] = {ad::slice_cols(sx, i, 1), ad::slice_cols(cx, i, 1),
                            ad::lift(Matrix(sz.col(i)), x), ad::lift(Matrix(cz.col(i)), x), tc};
        sites.push_back(ad::concat_cols(std::span<const T>(parts, 5)));
      }
      r = rnn.forward<T>(std::span<const T>(sites), p);
    }
    u = have ? ad::add(u, r) : r;
    have = true;
  }
  if (!have) return ad::lift(Matrix::Zero(x.rows(), x.cols()), x);
  return u;
}

}  // namespace pisoc
