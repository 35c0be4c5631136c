#include "pisoc/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace pisoc {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double u) {
  if (std::abs(u) < 1e-12) return 1.0;
  return std::sin(kPi * u) / (kPi * u);
}

// log sum_n e^{-beta E_n} with energies ascending.
double log_partition(const Vector& e, double beta) {
  double s = 0.0;
  for (Eigen::Index n = 0; n < e.size(); ++n) s += std::exp(-beta * (e[n] - e[0]));
  return -beta * e[0] + std::log(s);
}

// Composite Simpson weights on [a, b] with an odd number of nodes.
void simpson(double a, double b, int nodes, std::vector<double>& x, std::vector<double>& w) {
  if (nodes % 2 == 0) ++nodes;
  x.resize(static_cast<std::size_t>(nodes));
  w.resize(static_cast<std::size_t>(nodes));
  const double h = (b - a) / (nodes - 1);
  for (int i = 0; i < nodes; ++i) {
    x[static_cast<std::size_t>(i)] = a + i * h;
    const double c = (i == 0 || i == nodes - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    w[static_cast<std::size_t>(i)] = c * h / 3.0;
  }
}

}  // namespace

// ---- one-dimensional grid diagonalization ---------------------------------

SpectralSolution ed_1d(const std::function<double(double)>& potential, double extent, int points,
                       Discretization method) {
  if (!(extent > 0.0) || points < 3)
    throw Error(ErrorKind::Config, "grid needs L > 0 and at least 3 points", "oracle.G");
  SpectralSolution sol;
  sol.extent = extent;
  sol.method = method;
  sol.spacing = 2.0 * extent / (points - 1);
  const double h = sol.spacing;
  sol.grid = Vector::LinSpaced(points, -extent, extent);
  Vector v(points);
  for (int i = 0; i < points; ++i) v[i] = potential(sol.grid[i]);

  Eigen::SelfAdjointEigenSolver<Matrix> es;
  if (method == Discretization::CentralDifference) {
    Vector diag = v.array() + 1.0 / (h * h);
    Vector off = Vector::Constant(points - 1, -0.5 / (h * h));
    es.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
  } else {
    Matrix H(points, points);
    for (int i = 0; i < points; ++i) {
      for (int j = 0; j < points; ++j) {
        if (i == j) {
          H(i, j) = kPi * kPi / (6.0 * h * h) + v[i];
        } else {
          const double d = i - j;
          H(i, j) = ((i - j) % 2 == 0 ? 1.0 : -1.0) / (d * d * h * h);
        }
      }
    }
    es.compute(H);
  }
  if (es.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "grid eigensolver failed");
  sol.energies = es.eigenvalues();
  sol.wavefunctions = es.eigenvectors() / std::sqrt(h);
  // Fix signs so that the largest component is positive (reproducible output).
  for (int n = 0; n < points; ++n) {
    Eigen::Index arg;
    sol.wavefunctions.col(n).cwiseAbs().maxCoeff(&arg);
    if (sol.wavefunctions(arg, n) < 0) sol.wavefunctions.col(n) *= -1.0;
  }
  return sol;
}

SpectralSolution ed_1d(const ModelSystem& oscillator, double extent, int points,
                       Discretization method) {
  if (!oscillator.is_anharmonic())
    throw Error(ErrorKind::Config, "grid diagonalization supports the oscillator family", "model.kind");
  const double lambda = std::get<AnharmonicOscillator>(oscillator.potential()).lambda;
  return ed_1d([lambda](double x) { return 0.5 * x * x + lambda * x * x * x * x; }, extent, points,
               method);
}

double SpectralSolution::free_energy(double beta) const { return -log_partition(energies, beta) / beta; }

double SpectralSolution::truncation_bound(double beta) const {
  const Eigen::Index last = energies.size() - 1;
  return std::exp(-beta * energies[last] - log_partition(energies, beta));
}

double SpectralSolution::wavefunction(int n, double x) const {
  const double h = spacing;
  if (method == Discretization::Sinc) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < grid.size(); ++i) s += wavefunctions(i, n) * sinc((x - grid[i]) / h);
    return s;
  }
  const double u = (x - grid[0]) / h;
  if (u <= 0.0 || u >= double(grid.size() - 1)) return 0.0;
  const auto i = static_cast<Eigen::Index>(std::floor(u));
  const double f = u - double(i);
  return (1.0 - f) * wavefunctions(i, n) + f * wavefunctions(i + 1, n);
}

double SpectralSolution::diagonal_density(double beta, double x, double smoothing) const {
  const double e0 = energies[0];
  // States beyond this cut contribute below double precision.
  Eigen::Index kept = 0;
  while (kept < energies.size() && beta * (energies[kept] - e0) < 40.0) ++kept;
  if (smoothing <= 0.0) {
    double s = 0.0;
    for (Eigen::Index n = 0; n < kept; ++n) {
      const double p = wavefunction(static_cast<int>(n), x);
      s += std::exp(-beta * energies[n]) * p * p;
    }
    return s;
  }
  if (method != Discretization::Sinc)
    throw Error(ErrorKind::Config, "smoothed densities need the sinc discretization");
  std::vector<double> y;
  std::vector<double> w;
  simpson(x - 10.0 * smoothing, x + 10.0 * smoothing, 801, y, w);
  const double norm = 1.0 / std::sqrt(2.0 * kPi * smoothing * smoothing);
  Matrix basis(static_cast<Eigen::Index>(y.size()), grid.size());
  for (std::size_t q = 0; q < y.size(); ++q) {
    const double g = w[q] * norm * std::exp(-(y[q] - x) * (y[q] - x) / (2 * smoothing * smoothing));
    for (Eigen::Index i = 0; i < grid.size(); ++i)
      basis(static_cast<Eigen::Index>(q), i) = g * sinc((y[q] - grid[i]) / spacing);
  }
  const Vector folded_basis = basis.colwise().sum().transpose();  // (sinc_i * g)(x)
  double s = 0.0;
  for (Eigen::Index n = 0; n < kept; ++n) {
    const double a = wavefunction(static_cast<int>(n), x);
    const double b = wavefunctions.col(n).dot(folded_basis);
    s += std::exp(-beta * energies[n]) * a * b;
  }
  return s;
}

double SpectralSolution::smoothed_free_energy(double beta, double smoothing) const {
  if (smoothing <= 0.0) return free_energy(beta);
  if (method != Discretization::Sinc)
    throw Error(ErrorKind::Config, "smoothed free energies need the sinc discretization");
  const Eigen::Index g = grid.size();
  // Toeplitz matrix of e^{-s^2 p^2/2} between sinc functions.
  std::vector<double> u;
  std::vector<double> wu;
  simpson(-kPi, kPi, static_cast<int>(64 * g + 1), u, wu);
  Vector toeplitz(g);
  for (Eigen::Index d = 0; d < g; ++d) {
    double s = 0.0;
    for (std::size_t q = 0; q < u.size(); ++q)
      s += wu[q] * std::cos(u[q] * double(d)) *
           std::exp(-smoothing * smoothing * u[q] * u[q] / (2 * spacing * spacing));
    toeplitz[d] = s / (2 * kPi);
  }
  Matrix m(g, g);
  for (Eigen::Index i = 0; i < g; ++i)
    for (Eigen::Index j = 0; j < g; ++j) m(i, j) = toeplitz[std::abs(i - j)];
  const double e0 = energies[0];
  double z = 0.0;
  for (Eigen::Index n = 0; n < energies.size() && beta * (energies[n] - e0) < 40.0; ++n) {
    const Vector c = wavefunctions.col(n) * std::sqrt(spacing);
    z += std::exp(-beta * (energies[n] - e0)) * c.dot(m * c);
  }
  return -(std::log(z) - beta * e0) / beta;
}

OscillatorReference oscillator_reference(const ModelSystem& oscillator, double tol) {
  const double lambda = std::get<AnharmonicOscillator>(oscillator.potential()).lambda;
  const double beta = oscillator.beta();
  // Energy window that carries all thermal weight, and its turning point.
  const double e_max = 40.0 / beta + 10.0;
  double turn = std::sqrt(2.0 * e_max);
  if (lambda > 0.0) turn = std::sqrt((-0.5 + std::sqrt(0.25 + 4.0 * lambda * e_max)) / (2.0 * lambda));
  double extent = turn + 4.0;
  // Keep the kinetic cut-off (pi/h)^2/2 above the window.
  int points = 2 * static_cast<int>(std::ceil(extent / std::min(0.1, kPi / std::sqrt(8.0 * e_max)))) + 1;

  auto f_of = [&](double l, int g) {
    auto s = ed_1d(oscillator, l, g);
    return std::pair{s.free_energy(beta), s.energies[0]};
  };
  auto [f, e0] = f_of(extent, points);
  for (int round = 0; round < 4; ++round) {
    const auto [f_fine, e_fine] = f_of(extent, 2 * points - 1);
    const auto [f_wide, e_wide] = f_of(1.5 * extent, 3 * points / 2);
    const double change = std::max({std::abs(f_fine - f), std::abs(f_wide - f), std::abs(e_fine - e0)});
    if (change < tol) return {f, e0, extent, points, change};
    extent *= 1.5;
    points = 3 * points;
    std::tie(f, e0) = f_of(extent, points);
  }
  throw Error(ErrorKind::Convergence, "oscillator spectrum did not converge under grid refinement");
}

// ---- rotor chain ----------------------------------------------------------

RotorSpectrum ed_rotor(int sites, double coupling, int m_max, ChainBoundary boundary) {
  if (sites < 2 || sites > 4)
    throw Error(ErrorKind::Config, "rotor diagonalization supports 2 to 4 sites", "N");
  if (m_max < 1) throw Error(ErrorKind::Config, "m_max must be positive", "oracle.m_max");
  const ModelSystem chain = ModelSystem::rotor_chain(sites, coupling, 1.0, boundary);
  const auto bonds = chain.bonds();

  // Enumerate basis states grouped by total momentum.
  std::map<int, std::vector<std::vector<int>>> by_total;
  std::vector<int> m(static_cast<std::size_t>(sites), -m_max);
  while (true) {
    int total = 0;
    for (int v : m) total += v;
    by_total[total].push_back(m);
    int k = 0;
    while (k < sites && m[static_cast<std::size_t>(k)] == m_max) m[static_cast<std::size_t>(k++)] = -m_max;
    if (k == sites) break;
    ++m[static_cast<std::size_t>(k)];
  }

  RotorSpectrum out;
  out.sites = sites;
  out.m_max = m_max;
  out.boundary = boundary;
  out.coupling = coupling;
  std::vector<double> all;
  for (auto& [total, states] : by_total) {
    std::map<std::vector<int>, Eigen::Index> index;
    for (std::size_t s = 0; s < states.size(); ++s) index[states[s]] = static_cast<Eigen::Index>(s);
    const auto dim = static_cast<Eigen::Index>(states.size());
    Matrix h = Matrix::Zero(dim, dim);
    for (Eigen::Index s = 0; s < dim; ++s) {
      const auto& st = states[static_cast<std::size_t>(s)];
      double kinetic = 0.0;
      for (int v : st) kinetic += 0.5 * v * v;
      h(s, s) = kinetic;
      for (auto [i, j] : bonds) {
        auto moved = st;
        ++moved[static_cast<std::size_t>(i)];
        --moved[static_cast<std::size_t>(j)];
        const auto it = index.find(moved);
        if (it == index.end()) continue;
        h(it->second, s) -= 0.5 * coupling;
        h(s, it->second) -= 0.5 * coupling;
      }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "rotor eigensolver failed");
    RotorSpectrum::Block block{es.eigenvalues(), es.eigenvectors(), std::move(states)};
    for (Eigen::Index n = 0; n < block.energies.size(); ++n) all.push_back(block.energies[n]);
    out.blocks.push_back(std::move(block));
  }
  std::sort(all.begin(), all.end());
  out.energies = Eigen::Map<Vector>(all.data(), static_cast<Eigen::Index>(all.size()));
  return out;
}

double RotorSpectrum::free_energy_per_site(double beta) const {
  return -log_partition(energies, beta) / (beta * sites);
}

double RotorSpectrum::correlation(double beta, int i, int j) const {
  if (i < 0 || j < 0 || i >= sites || j >= sites)
    throw Error(ErrorKind::Config, "site index out of range");
  if (i == j) return 1.0;
  const double e0 = energies[0];
  double num = 0.0;
  double den = 0.0;
  for (const auto& b : blocks) {
    std::map<std::vector<int>, Eigen::Index> index;
    for (std::size_t s = 0; s < b.states.size(); ++s) index[b.states[s]] = static_cast<Eigen::Index>(s);
    const auto dim = static_cast<Eigen::Index>(b.states.size());
    Matrix c = Matrix::Zero(dim, dim);
    for (Eigen::Index s = 0; s < dim; ++s) {
      auto moved = b.states[static_cast<std::size_t>(s)];
      ++moved[static_cast<std::size_t>(i)];
      --moved[static_cast<std::size_t>(j)];
      const auto it = index.find(moved);
      if (it == index.end()) continue;
      c(it->second, s) += 0.5;
      c(s, it->second) += 0.5;
    }
    for (Eigen::Index n = 0; n < dim; ++n) {
      const double w = std::exp(-beta * (b.energies[n] - e0));
      num += w * b.vectors.col(n).dot(c * b.vectors.col(n));
      den += w;
    }
  }
  return num / den;
}

RotorReference rotor_reference(const ModelSystem& rotor, int m_start, double tol) {
  const auto* chain = std::get_if<RotorChain>(&rotor.potential());
  if (chain == nullptr) throw Error(ErrorKind::Config, "rotor reference needs a rotor chain", "model.kind");
  const double beta = rotor.beta();
  int m = m_start;
  RotorSpectrum spec = ed_rotor(rotor.dim(), chain->coupling, m, chain->boundary);
  double f = spec.free_energy_per_site(beta);
  for (int round = 0; round < 6; ++round) {
    RotorSpectrum next = ed_rotor(rotor.dim(), chain->coupling, m + 2, chain->boundary);
    const double f_next = next.free_energy_per_site(beta);
    if (std::abs(f_next - f) < tol) {
      RotorReference ref{f_next, m + 2, std::abs(f_next - f), {}};
      const int n = rotor.dim();
      ref.correlations.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          ref.correlations[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
              next.correlation(beta, i, j);
      return ref;
    }
    m += 2;
    spec = std::move(next);
    f = f_next;
  }
  throw Error(ErrorKind::Convergence, "rotor spectrum did not converge in m_max");
}

// ---- closed forms ---------------------------------------------------------

double free_particle_kernel(const Vector& x0, const Vector& xT, double total) {
  if (x0.size() != xT.size()) throw Error(ErrorKind::Dimension, "kernel endpoints differ in size");
  const double n = static_cast<double>(x0.size());
  return std::pow(2 * kPi * total, -0.5 * n) * std::exp(-(xT - x0).squaredNorm() / (2 * total));
}

double harmonic_kernel(double x0, double xT, double total) {
  const double sh = std::sinh(total);
  return std::exp(-((x0 * x0 + xT * xT) * std::cosh(total) - 2 * x0 * xT) / (2 * sh)) /
         std::sqrt(2 * kPi * sh);
}

double harmonic_free_energy(double beta) { return std::log(2 * std::sinh(0.5 * beta)) / beta; }

double free_rotor_free_energy(double beta, int m_cut) {
  double s = 0.0;
  for (int m = -m_cut; m <= m_cut; ++m) s += std::exp(-0.5 * beta * m * m);
  return -std::log(s) / beta;
}

double hydrogen_ground_state_kernel(double r, double beta) {
  return std::exp(0.5 * beta) * std::exp(-2 * r) / kPi;
}

// ---- disk cache -----------------------------------------------------------

std::filesystem::path OracleCache::path_for(const std::string& key) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : key) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx.json", static_cast<unsigned long long>(h));
  return dir_ / buf;
}

std::optional<nlohmann::json> OracleCache::load(const std::string& key) const {
  std::ifstream in(path_for(key));
  if (!in) return std::nullopt;
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.value("key", "") != key) return std::nullopt;
    return doc.at("value");
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

void OracleCache::store(const std::string& key, const nlohmann::json& value) const {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  std::ofstream out(path_for(key));
  if (!out) throw Error(ErrorKind::Io, "cannot write oracle cache in " + dir_.string());
  out << nlohmann::json{{"key", key}, {"value", value}}.dump(2) << '\n';
}

nlohmann::json OracleCache::get_or_compute(const std::string& key,
                                           const std::function<nlohmann::json()>& compute) const {
  if (auto hit = load(key)) return *hit;
  nlohmann::json v = compute();
  store(key, v);
  return v;
}

std::string oracle_key(const std::string& kind, const ModelSystem& system, const std::string& resolution) {
  std::ostringstream os;
  os.precision(17);
  os << kind << '|' << system.name() << "|beta=" << system.beta() << '|' << resolution;
  return os.str();
}

}  // namespace pisoc
