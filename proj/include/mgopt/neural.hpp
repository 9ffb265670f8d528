// Self-contained feedforward network for the costate correction term:
// tanh layers end to end, manual reverse-mode gradients, Adam updates and
// mini-batch fitting. No external ML dependencies.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mgopt/common.hpp"
#include "mgopt/mgarch.hpp"

namespace mgopt::neural {

/// Weights and biases of the correction network, plus the input/output
/// conditioning baked into the model: per-feature standardization and a
/// scalar output scale (tanh output is bounded, targets are not).
struct MlpParams {
  std::vector<Mat> weights;  ///< weights[l] maps layer l activations: out x in
  std::vector<Vec> biases;
  Vec feature_mean;          ///< empty = no standardization
  Vec feature_std;
  double output_scale = 1.0;
  std::uint64_t seed = 0;    ///< seed used at initialization

  int num_layers() const { return static_cast<int>(weights.size()); }
  Eigen::Index input_dim() const { return weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.back().rows(); }
  std::vector<int> layer_sizes() const;
  void validate() const;
};

/// Input n*n + 2n, four hidden layers of the given width, output n.
std::vector<int> default_layer_sizes(int n, int width = 400);

/// All parameters drawn iid N(0, stddev^2); deterministic given the seed.
MlpParams init_params(std::uint64_t seed, const std::vector<int>& sizes,
                      double stddev = 0.01);

/// Correction-network input: holdings entering the period, per-asset dollar
/// drift mu_i * s_i, and the dollar covariance in row-major order.
Vec make_features(const Vec& x_prev, const mgarch::MarketState& state,
                  const Vec& mu);

/// Network output for one feature vector.
Vec forward(const MlpParams& params, const Vec& features);

/// Batched network output; features/outputs are stored one sample per column.
Mat forward_batch(const MlpParams& params, const Mat& features);

struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;
};

/// Mean squared error over the batch and its gradient with respect to every
/// weight and bias. Throws NumericalError naming the first non-finite layer.
std::pair<double, Gradients> loss_and_grad(const MlpParams& params,
                                           const Mat& features,
                                           const Mat& targets);

struct AdamState {
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  static AdamState like(const MlpParams& params, double lr = 1e-3);
};

/// One bias-corrected Adam update, in place.
void adam_step(MlpParams& params, const Gradients& grad, AdamState& state);

struct Dataset {
  Mat features;  ///< one sample per column
  Mat targets;
};

struct TrainingOptions {
  int epochs = 100;
  int batch_size = 0;  ///< 0 = full dataset per step
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Shuffled mini-batch Adam for the given number of epochs. Deterministic
/// given the seed; returns the parameters with the best epoch loss along
/// with the per-epoch loss trace.
std::pair<MlpParams, std::vector<double>> fit(const MlpParams& params,
                                              const Dataset& dataset,
                                              const TrainingOptions& opts);

}  // namespace mgopt::neural
