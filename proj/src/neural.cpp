#include "mgopt/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgopt::neural {

std::vector<int> MlpParams::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(weights.front().cols()));
  for (const Mat& w : weights) sizes.push_back(static_cast<int>(w.rows()));
  return sizes;
}

void MlpParams::validate() const {
  require(!weights.empty() && weights.size() == biases.size(),
          "MlpParams: weights/biases mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(biases[l].size() == weights[l].rows(),
            "MlpParams: bias size mismatch at layer " + std::to_string(l));
    if (l > 0) {
      require(weights[l].cols() == weights[l - 1].rows(),
              "MlpParams: layer shapes do not chain at layer " +
                  std::to_string(l));
    }
    require(weights[l].allFinite() && biases[l].allFinite(),
            "MlpParams: non-finite parameters at layer " + std::to_string(l));
  }
  require(feature_mean.size() == feature_std.size(),
          "MlpParams: standardization stats mismatch");
  require(feature_mean.size() == 0 || feature_mean.size() == input_dim(),
          "MlpParams: standardization dimension mismatch");
}

std::vector<int> default_layer_sizes(int n, int width) {
  return {n * n + 2 * n, width, width, width, width, width, n};
}

MlpParams init_params(std::uint64_t seed, const std::vector<int>& sizes,
                      double stddev) {
  require(sizes.size() >= 2, "init_params: need at least input and output");
  GaussianRng rng(seed);
  MlpParams params;
  params.seed = seed;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Mat w(sizes[l + 1], sizes[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = stddev * rng.normal();
    }
    Vec b(sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = stddev * rng.normal();
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

Vec make_features(const Vec& x_prev, const mgarch::MarketState& state,
                  const Vec& mu) {
  const auto n = state.dim();
  require(x_prev.size() == n && mu.size() == n,
          "make_features: dimension mismatch");
  Vec f(n * n + 2 * n);
  f.head(n) = x_prev;
  f.segment(n, n) = mu.cwiseProduct(state.s);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      f[2 * n + i * n + j] = state.p(i, j);  // row-major flattening
    }
  }
  return f;
}

namespace {

Mat standardized(const MlpParams& params, const Mat& features) {
  if (params.feature_mean.size() == 0) return features;
  return (features.colwise() - params.feature_mean)
      .array()
      .colwise() /
      params.feature_std.cwiseMax(1e-12).array();
}

// Activations per layer for a batch; activations[0] is the (standardized)
// input, activations[L] the final tanh output before scaling.
std::vector<Mat> run_forward(const MlpParams& params, const Mat& features) {
  std::vector<Mat> activations;
  activations.reserve(params.num_layers() + 1);
  activations.push_back(standardized(params, features));
  for (int l = 0; l < params.num_layers(); ++l) {
    Mat z = params.weights[l] * activations.back();
    z.colwise() += params.biases[l];
    Mat a = z.array().tanh();
    if (!a.allFinite()) {
      throw NumericalError("neural: non-finite activations at layer " +
                           std::to_string(l));
    }
    activations.push_back(std::move(a));
  }
  return activations;
}

}  // namespace

Vec forward(const MlpParams& params, const Vec& features) {
  return forward_batch(params, features).col(0);
}

Mat forward_batch(const MlpParams& params, const Mat& features) {
  require(features.rows() == params.input_dim(),
          "forward: feature dimension mismatch");
  return params.output_scale * run_forward(params, features).back();
}

std::pair<double, Gradients> loss_and_grad(const MlpParams& params,
                                           const Mat& features,
                                           const Mat& targets) {
  require(features.cols() > 0, "loss_and_grad: empty batch");
  require(features.rows() == params.input_dim() &&
              targets.rows() == params.output_dim() &&
              targets.cols() == features.cols(),
          "loss_and_grad: shape mismatch");

  const auto batch = static_cast<double>(features.cols());
  const std::vector<Mat> acts = run_forward(params, features);
  const Mat output = params.output_scale * acts.back();
  const Mat diff = output - targets;
  const double loss = diff.squaredNorm() / batch;

  Gradients grad;
  grad.weights.resize(params.num_layers());
  grad.biases.resize(params.num_layers());

  // d(loss)/d(final activation), then back through tanh/affine pairs
  Mat delta = (2.0 / batch) * params.output_scale * diff;
  for (int l = params.num_layers() - 1; l >= 0; --l) {
    delta = (delta.array() * (1.0 - acts[l + 1].array().square())).matrix();
    grad.weights[l] = delta * acts[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l > 0) delta = params.weights[l].transpose() * delta;
  }
  return {loss, std::move(grad)};
}

AdamState AdamState::like(const MlpParams& params, double lr) {
  AdamState state;
  state.lr = lr;
  for (int l = 0; l < params.num_layers(); ++l) {
    state.m_w.push_back(Mat::Zero(params.weights[l].rows(),
                                  params.weights[l].cols()));
    state.v_w.push_back(Mat::Zero(params.weights[l].rows(),
                                  params.weights[l].cols()));
    state.m_b.push_back(Vec::Zero(params.biases[l].size()));
    state.v_b.push_back(Vec::Zero(params.biases[l].size()));
  }
  return state;
}

void adam_step(MlpParams& params, const Gradients& grad, AdamState& state) {
  require(grad.weights.size() == params.weights.size(),
          "adam_step: gradient shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (int l = 0; l < params.num_layers(); ++l) {
    auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
      theta -= state.lr *
               (m / bc1).cwiseQuotient(
                   ((v / bc2).cwiseSqrt().array() + state.eps_hat).matrix());
    };
    update(params.weights[l], state.m_w[l], state.v_w[l], grad.weights[l]);
    update(params.biases[l], state.m_b[l], state.v_b[l], grad.biases[l]);
  }
}

std::pair<MlpParams, std::vector<double>> fit(const MlpParams& params,
                                              const Dataset& dataset,
                                              const TrainingOptions& opts) {
  require(dataset.features.cols() > 0, "fit: empty dataset");
  const auto samples = dataset.features.cols();
  const auto batch =
      opts.batch_size > 0 ? std::min<Eigen::Index>(opts.batch_size, samples)
                          : samples;

  MlpParams current = params;
  MlpParams best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  if (opts.epochs <= 0) return {current, trace};

  AdamState adam = AdamState::like(params, opts.lr);
  GaussianRng rng(opts.seed);
  std::vector<Eigen::Index> order(samples);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    // Fisher-Yates with the shared deterministic generator
    for (Eigen::Index i = samples - 1; i > 0; --i) {
      const auto j =
          static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(i + 1));
      std::swap(order[i], order[std::min(j, i)]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < samples; start += batch) {
      const auto count = std::min(batch, samples - start);
      Mat f(dataset.features.rows(), count);
      Mat t(dataset.targets.rows(), count);
      for (Eigen::Index i = 0; i < count; ++i) {
        f.col(i) = dataset.features.col(order[start + i]);
        t.col(i) = dataset.targets.col(order[start + i]);
      }
      auto [loss, grad] = loss_and_grad(current, f, t);
      adam_step(current, grad, adam);
      epoch_loss += loss;
      ++batches;
    }
    epoch_loss /= batches;
    trace.push_back(epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best = current;
    }
  }
  return {best, trace};
}

}  // namespace mgopt::neural
