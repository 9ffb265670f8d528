#include "mgopt/common.hpp"

#include <cmath>

namespace mgopt {

// MT19937-64 (reference constants), seeded by the usual multiplier recurrence.
std::uint64_t GaussianRng::next() {
  constexpr int kN = 312;
  constexpr int kM = 156;
  constexpr std::uint64_t kMatrixA = 0xB5026F5AA96619E9ULL;
  constexpr std::uint64_t kUpperMask = 0xFFFFFFFF80000000ULL;
  constexpr std::uint64_t kLowerMask = 0x7FFFFFFFULL;

  if (mt_index_ > kN) {
    mt_[0] = state_;
    for (int i = 1; i < kN; ++i) {
      mt_[i] = 6364136223846793005ULL * (mt_[i - 1] ^ (mt_[i - 1] >> 62)) +
               static_cast<std::uint64_t>(i);
    }
    mt_index_ = kN;
  }
  if (mt_index_ >= kN) {
    for (int i = 0; i < kN; ++i) {
      std::uint64_t x = (mt_[i] & kUpperMask) | (mt_[(i + 1) % kN] & kLowerMask);
      mt_[i] = mt_[(i + kM) % kN] ^ (x >> 1);
      if (x & 1ULL) mt_[i] ^= kMatrixA;
    }
    mt_index_ = 0;
  }
  std::uint64_t x = mt_[mt_index_++];
  x ^= (x >> 29) & 0x5555555555555555ULL;
  x ^= (x << 17) & 0x71D67FFFEDA60000ULL;
  x ^= (x << 37) & 0xFFF7EEE000000000ULL;
  x ^= x >> 43;
  return x;
}

double GaussianRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Vec GaussianRng::normal_vector(Eigen::Index n) {
  Vec z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()[0];
}

double condition_number_sym(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m), Eigen::EigenvaluesOnly);
  const Vec& w = es.eigenvalues();
  const double lo = w.minCoeff();
  const double hi = w.maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

Mat psd_factor(const Mat& sigma, double negative_tol) {
  require(sigma.rows() == sigma.cols(), "psd_factor: matrix must be square");
  Eigen::LLT<Mat> llt(symmetrized(sigma));
  if (llt.info() == Eigen::Success) return llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(sigma));
  if (es.info() != Eigen::Success) {
    throw NumericalError("psd_factor: eigendecomposition failed");
  }
  Vec w = es.eigenvalues();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] < -negative_tol) {
      throw NumericalError("psd_factor: eigenvalue " + std::to_string(w[i]) +
                           " below tolerance " + std::to_string(-negative_tol));
    }
    if (w[i] < 0.0) w[i] = 0.0;
  }
  return es.eigenvectors() * w.cwiseSqrt().asDiagonal();
}

}  // namespace mgopt
