#include "pisoc/nn.hpp"

#include <cmath>
#include <random>

namespace pisoc {

namespace {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / double(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace

MlpController::MlpController(int input_dim, std::vector<int> hidden, int output_dim,
                             std::uint64_t seed)
    : input_dim_(input_dim), hidden_(std::move(hidden)), output_dim_(output_dim) {
  if (input_dim < 1 || output_dim < 1)
    throw Error(ErrorKind::Config, "MLP dimensions must be positive");
  std::mt19937_64 rng(seed);
  int in = input_dim;
  for (int width : hidden_) {
    if (width < 1) throw Error(ErrorKind::Config, "hidden widths must be positive", "hidden");
    params_.push_back(glorot(in, width, rng));
    params_.push_back(Matrix::Zero(1, width));
    in = width;
  }
  params_.push_back(Matrix::Zero(in, output_dim));
  params_.push_back(Matrix::Zero(1, output_dim));
}

json MlpController::architecture() const {
  return json{{"kind", "mlp"},
              {"input_dim", input_dim_},
              {"hidden", hidden_},
              {"output_dim", output_dim_}};
}

MlpController MlpController::from_architecture(const json& arch) {
  if (arch.value("kind", "") != "mlp")
    throw Error(ErrorKind::Architecture, "architecture is not an MLP", "architecture.kind");
  return MlpController(arch.at("input_dim").get<int>(), arch.at("hidden").get<std::vector<int>>(),
                       arch.at("output_dim").get<int>(), 0);
}

BiRecurrentController::BiRecurrentController(int features_per_site, int hidden, std::uint64_t seed)
    : features_(features_per_site), hidden_(hidden) {
  if (features_per_site < 1 || hidden < 1)
    throw Error(ErrorKind::Config, "recurrent controller dimensions must be positive", "H");
  std::mt19937_64 rng(seed);
  const int g = 4 * hidden;
  auto bias = [&] {
    Matrix b = Matrix::Zero(1, g);
    b.middleCols(hidden, hidden).setOnes();  // forget gate starts open
    return b;
  };
  params_.push_back(glorot(features_per_site, g, rng));
  params_.push_back(glorot(hidden, g, rng));
  params_.push_back(bias());
  params_.push_back(glorot(hidden, g, rng));
  params_.push_back(glorot(hidden, g, rng));
  params_.push_back(bias());
  params_.push_back(Matrix::Zero(2 * hidden, 1));
  params_.push_back(Matrix::Zero(1, 1));
}

json BiRecurrentController::architecture() const {
  return json{{"kind", "birecurrent"},
              {"features_per_site", features_},
              {"H", hidden_},
              {"depth", 2}};
}

BiRecurrentController BiRecurrentController::from_architecture(const json& arch) {
  if (arch.value("kind", "") != "birecurrent")
    throw Error(ErrorKind::Architecture, "architecture is not a recurrent controller",
                "architecture.kind");
  if (arch.value("depth", 2) != 2)
    throw Error(ErrorKind::Architecture, "only depth-2 recurrent stacks are supported",
                "architecture.depth");
  return BiRecurrentController(arch.at("features_per_site").get<int>(), arch.at("H").get<int>(), 0);
}

json parameters_to_json(std::span<const Matrix> params) {
  json out = json::array();
  for (const Matrix& m : params) {
    std::vector<double> data(m.data(), m.data() + m.size());
    out.push_back(json{{"shape", {m.rows(), m.cols()}}, {"data", data}});
  }
  return out;
}

void parameters_from_json(const json& doc, std::vector<Matrix>& expected) {
  if (!doc.is_array() || doc.size() != expected.size()) {
    throw Error(ErrorKind::Architecture, "checkpoint holds " + std::to_string(doc.size()) +
                                             " parameter arrays, architecture expects " +
                                             std::to_string(expected.size()),
                "parameters");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto shape = doc[i].at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != expected[i].rows() || shape[1] != expected[i].cols()) {
      throw Error(ErrorKind::Architecture,
                  "parameter " + std::to_string(i) + " has a shape the architecture does not match",
                  "parameters");
    }
    const auto data = doc[i].at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != expected[i].size())
      throw Error(ErrorKind::Architecture, "parameter data length mismatch", "parameters");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto data = doc[i].at("data").get<std::vector<double>>();
    expected[i] = Eigen::Map<const Matrix>(data.data(), expected[i].rows(), expected[i].cols());
  }
}

bool sgd_step(std::vector<Matrix>& params, std::span<const Matrix> grads, AdamState& state,
              double step_size) {
  if (grads.size() != params.size())
    throw Error(ErrorKind::Dimension, "gradient list does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw Error(ErrorKind::Dimension, "gradient shape mismatch");
    if (!grads[i].allFinite()) {
      ++state.skipped;
      return false;
    }
  }
  if (state.first.empty()) {
    for (const Matrix& p : params) {
      state.first.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.second.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first[i] = state.beta1 * state.first[i] + (1.0 - state.beta1) * grads[i];
    state.second[i] =
        state.beta2 * state.second[i] + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    params[i].array() -= step_size * (state.first[i].array() / c1) /
                         ((state.second[i].array() / c2).sqrt() + state.epsilon);
  }
  return true;
}

}  // namespace pisoc
