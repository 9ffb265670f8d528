// Shared basics: error types, linear-algebra helpers and the seeded
// Gaussian generator used by every stochastic component.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mgopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Numerical failure (factorization breakdown, NaN, ill-conditioning).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or insufficient input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A configured budget (memory, node count) would be exceeded.
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The model violates a stability requirement (non-contractive recursion,
/// divergent iteration).
struct ModelInstabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic standard-normal stream (64-bit Mersenne Twister with a
/// polar Box-Muller transform). Hand-rolled so that streams are identical
/// across platforms and standard-library versions.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : state_(seed) {}

  /// Uniform draw in [0, 1).
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw.
  double normal();

  /// Vector of n independent standard normals.
  Vec normal_vector(Eigen::Index n);

 private:
  std::uint64_t next();

  std::uint64_t state_;
  std::uint64_t mt_[312];
  int mt_index_ = 313;  // force initialization on first draw
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Spectral (operator 2-) norm.
double spectral_norm(const Mat& m);

/// Largest |eigenvalue| ratio of a symmetric PSD matrix: lambda_max/lambda_min.
/// Returns +inf when lambda_min <= 0.
double condition_number_sym(const Mat& m);

/// Factor L with L L^T = sigma for a symmetric PSD matrix. Uses Cholesky and
/// falls back to an eigendecomposition when sigma is only semidefinite.
/// Eigenvalues in [-negative_tol, 0) are clipped to zero; anything below
/// -negative_tol raises NumericalError.
Mat psd_factor(const Mat& sigma, double negative_tol = 1e-12);

/// Symmetrize in place: (m + m^T)/2.
inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace mgopt
