#pragma once

// Euler-Maruyama path generation with the cost functional accumulated along
// the way:
//   C = sum_k [ (V_k + V_{k+1})/2 + |u_k|^2/2 ] dt_k + sum_k u_k . dW_k
//       + |x_K - z|^2/(2 eps^2) + (n/2) log(2 pi eps^2)
// u and dW are taken at the left end of each step (Ito).

#include "pisoc/control.hpp"
#include "pisoc/model.hpp"
#include "pisoc/rng.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <type_traits>
#include <vector>

namespace pisoc {

enum class GridScheme { Uniform, LinearlyDecreasing };

GridScheme parse_grid_scheme(const std::string& name);
const char* to_string(GridScheme scheme);

struct TimeGrid {
  std::vector<double> t;   // K + 1 points, t[0] = 0, t[K] = total
  std::vector<double> dt;  // K steps
  double total = 0.0;
  GridScheme scheme = GridScheme::Uniform;

  int steps() const { return static_cast<int>(dt.size()); }
};

TimeGrid build_time_grid(double total, int steps, GridScheme scheme);

/// -log of the Gaussian-smoothed delta between x_end and x_target.
double terminal_penalty(const Vector& x_end, const Vector& x_target, double eps,
                        const Geometry& geometry);

struct PathBatch {
  std::vector<Matrix> positions;  // K + 1 blocks of [B x n]; empty unless requested
  std::vector<Matrix> noises;     // K blocks of [B x n], already scaled by sqrt(dt_k)
  Vector cost_running;
  Vector cost_terminal;
  std::vector<char> valid;
  std::size_t invalid_count = 0;

  Vector total_cost() const { return cost_running + cost_terminal; }
  std::size_t size() const { return static_cast<std::size_t>(cost_running.size()); }
};

struct PathRequest {
  std::uint64_t seed = 0;
  Stream stream = Stream::Paths;
  std::uint64_t first_index = 0;  // global index of the first path in this batch
  std::size_t count = 0;
  bool keep_positions = false;
};

/// Gaussian increments for paths [first_index, first_index + count); path p
/// always receives the same draws for a given (seed, stream).
std::vector<Matrix> draw_increments(const TimeGrid& grid, int dim, const PathRequest& request);

/// Propagates `request.count` paths from x0 towards the endpoint z. x0 and z
/// are single rows [1 x n] shared by all paths, or one row per path.
/// `control` may be null (zero drift).
PathBatch propagate(const ModelSystem& system, const TimeGrid& grid, const Matrix& x0,
                    const Matrix& z, const ControlFunction* control, double eps,
                    const PathRequest& request);

template <typename T>
struct PathCost {
  T running;
  T terminal;
};

/// Core integrator over pre-drawn increments, in the value domain of x0
/// (Matrix for inference, ad::Var for recording). x0 and z must be [B x n].
/// When `positions` is non-null the visited configurations are appended.
template <typename T>
PathCost<T> integrate_paths(const ModelSystem& system, const TimeGrid& grid, const T& x0,
                            const Matrix& z, const ControlFunction* control,
                            std::span<const T> params, const std::vector<Matrix>& noises,
                            double eps, std::vector<Matrix>* positions = nullptr) {
  const Geometry& geo = system.geometry();
  const int n = geo.dim();
  T x = x0;
  T v_prev = potential_batch(system, x);
  T running{};
  constexpr bool plain = std::is_same_v<T, Matrix>;
  if constexpr (plain) {
    if (positions) positions->push_back(x0);
  }
  for (int k = 0; k < grid.steps(); ++k) {
    const double dt = grid.dt[static_cast<std::size_t>(k)];
    const Matrix& dw = noises[static_cast<std::size_t>(k)];
    T step{};
    T x_next{};
    if (control != nullptr) {
      const T u = control->drift<T>(x, z, grid.t[static_cast<std::size_t>(k)], grid.total, params);
      step = ad::add(ad::scale(ad::sum_cols(ad::square(u)), 0.5 * dt), ad::sum_cols(ad::mul(u, dw)));
      x_next = wrap_batch(geo, ad::add(ad::add(x, ad::scale(u, dt)), dw));
    } else {
      x_next = wrap_batch(geo, ad::add(x, dw));
    }
    const T v_next = potential_batch(system, x_next);
    const T pot = ad::scale(ad::add(v_prev, v_next), 0.5 * dt);
    step = control != nullptr ? ad::add(step, pot) : pot;
    running = k == 0 ? step : ad::add(running, step);
    x = x_next;
    v_prev = v_next;
    if constexpr (plain) {
      if (positions) positions->push_back(x);
    }
  }
  const double norm = 0.5 * n * std::log(2.0 * std::numbers::pi * eps * eps);
  const T d = displacement_batch(geo, x, ad::lift(z, x));
  const T terminal = ad::shift(ad::scale(ad::sum_cols(ad::square(d)), 0.5 / (eps * eps)), norm);
  return {running, terminal};
}

}  // namespace pisoc
