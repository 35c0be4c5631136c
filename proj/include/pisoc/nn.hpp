#pragma once

// Neural residual controllers and their optimizer.
//
// Both controllers keep parameters as a flat list of matrices. Forward passes
// are templates over the value type (ad::Matrix for inference, ad::Var when a
// tape records a training step) and take the parameter list explicitly, so the
// same code serves both modes.

#include "pisoc/ad.hpp"
#include "pisoc/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pisoc {

using json = nlohmann::json;
using Matrix = Eigen::MatrixXd;

/// Feed-forward tanh network; the output layer starts at exactly zero.
class MlpController {
 public:
  MlpController(int input_dim, std::vector<int> hidden, int output_dim, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }

  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }

  json architecture() const;
  static MlpController from_architecture(const json& arch);

  template <typename T>
  T forward(const T& features, std::span<const T> p) const {
    if (features.cols() != input_dim_) {
      throw Error(ErrorKind::Dimension, "MLP expects " + std::to_string(input_dim_) +
                                            " features, got " + std::to_string(features.cols()));
    }
    const std::size_t layers = p.size() / 2;
    T h = ad::affine(features, p[0], p[1]);
    for (std::size_t l = 1; l < layers; ++l) h = ad::affine(ad::tanh(h), p[2 * l], p[2 * l + 1]);
    return h;
  }

  Matrix forward(const Matrix& features) const {
    return forward<Matrix>(features, std::span<const Matrix>(params_));
  }

 private:
  int input_dim_;
  std::vector<int> hidden_;
  int output_dim_;
  std::vector<Matrix> params_;
};

/// Shared two-layer LSTM scanned across sites in both directions. The same
/// cell weights serve every site and both scan directions, so the parameter
/// count does not depend on the number of sites. A dense head maps
/// [h_forward | h_backward] of the top layer to one control value per site.
///
/// Parameter layout: W1 [F x 4H], U1 [H x 4H], b1 [1 x 4H], W2 [H x 4H],
/// U2 [H x 4H], b2 [1 x 4H], head weight [2H x 1], head bias [1 x 1].
class BiRecurrentController {
 public:
  BiRecurrentController(int features_per_site, int hidden, std::uint64_t seed);

  int features_per_site() const { return features_; }
  int hidden() const { return hidden_; }

  std::vector<Matrix>& parameters() { return params_; }
  const std::vector<Matrix>& parameters() const { return params_; }

  json architecture() const;
  static BiRecurrentController from_architecture(const json& arch);

  // sites[i] is [B x F]; the result is [B x N].
  template <typename T>
  T forward(std::span<const T> sites, std::span<const T> p) const {
    const std::size_t n = sites.size();
    for (const T& s : sites) {
      if (s.cols() != features_) {
        throw Error(ErrorKind::Dimension, "recurrent controller expects " +
                                              std::to_string(features_) + " features per site");
      }
    }
    std::vector<T> fwd = scan(sites, p, false);
    std::vector<T> bwd = scan(sites, p, true);
    std::vector<T> outputs;
    outputs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T both[2] = {fwd[i], bwd[i]};
      outputs.push_back(ad::affine(ad::concat_cols(std::span<const T>(both, 2)), p[6], p[7]));
    }
    return ad::concat_cols(std::span<const T>(outputs));
  }

  Matrix forward(std::span<const Matrix> sites) const {
    return forward<Matrix>(sites, std::span<const Matrix>(params_));
  }

 private:
  template <typename T>
  std::vector<T> scan(std::span<const T> sites, std::span<const T> p, bool reverse) const {
    const std::size_t n = sites.size();
    std::vector<T> top(n);
    T s1{};
    T s2{};
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t i = reverse ? n - 1 - step : step;
      s1 = ad::lstm_cell(sites[i], s1, p[0], p[1], p[2]);
      s2 = ad::lstm_cell(ad::slice_cols(s1, 0, hidden_), s2, p[3], p[4], p[5]);
      top[i] = ad::slice_cols(s2, 0, hidden_);
    }
    return top;
  }

  int features_;
  int hidden_;
  std::vector<Matrix> params_;
};

// Flat parameter lists <-> JSON arrays with shapes. Loading checks every
// shape against `expected` before copying anything.
json parameters_to_json(std::span<const Matrix> params);
void parameters_from_json(const json& doc, std::vector<Matrix>& expected);

/// Moment-tracking adaptive first-order optimizer (Adam).
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  long step = 0;
  std::size_t skipped = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Applies one update. Returns false, leaving parameters untouched and bumping
// state.skipped, if any gradient entry is non-finite.
bool sgd_step(std::vector<Matrix>& params, std::span<const Matrix> grads, AdamState& state,
              double step_size);

}  // namespace pisoc
