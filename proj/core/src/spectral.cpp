#include "resbridge/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace resbridge {

namespace {

void check_traj(const Tensor& x, const char* what) {
  if (x.shape().size() != 2 || x.rows() < 1 || x.cols() < 1) {
    throw std::invalid_argument(std::string(what) + ": expected [T, A] with T,A >= 1");
  }
}

// Orthonormal DCT-II basis, row f = basis vector of frequency f.
Tensor dct_basis(int64_t t_len) {
  Tensor c({t_len, t_len});
  const double a0 = std::sqrt(1.0 / static_cast<double>(t_len));
  const double af = std::sqrt(2.0 / static_cast<double>(t_len));
  for (int64_t f = 0; f < t_len; ++f) {
    const double amp = (f == 0) ? a0 : af;
    for (int64_t j = 0; j < t_len; ++j) {
      c.at(f, j) = amp * std::cos(std::numbers::pi * static_cast<double>(f) *
                                  (static_cast<double>(j) + 0.5) /
                                  static_cast<double>(t_len));
    }
  }
  return c;
}

}  // namespace

SpectralCoeffs dct_forward(const Trajectory& x) {
  check_traj(x, "dct_forward");
  return matmul(dct_basis(x.rows()), x);
}

Trajectory dct_inverse(const SpectralCoeffs& coeffs) {
  check_traj(coeffs, "dct_inverse");
  const Tensor basis = dct_basis(coeffs.rows());
  const int64_t t_len = coeffs.rows(), a_dims = coeffs.cols();
  Tensor x({t_len, a_dims});
  // x = basis^T * coeffs (the basis is orthogonal).
  for (int64_t f = 0; f < t_len; ++f) {
    for (int64_t j = 0; j < t_len; ++j) {
      const double b = basis.at(f, j);
      for (int64_t a = 0; a < a_dims; ++a) x.at(j, a) += b * coeffs.at(f, a);
    }
  }
  return x;
}

SpectralCoeffs lowpass_project(const SpectralCoeffs& coeffs, int k) {
  check_traj(coeffs, "lowpass_project");
  if (k < 1 || k > coeffs.rows()) throw std::invalid_argument("cutoff out of range");
  SpectralCoeffs out = coeffs;
  for (int64_t f = k; f < out.rows(); ++f) {
    for (int64_t a = 0; a < out.cols(); ++a) out.at(f, a) = 0.0;
  }
  return out;
}

SpectralDecomposition decompose(const Trajectory& x, int k) {
  check_traj(x, "decompose");
  SpectralDecomposition d;
  d.cutoff = k;
  d.semantic = dct_inverse(lowpass_project(dct_forward(x), k));
  d.execution = sub(x, d.semantic);
  return d;
}

}  // namespace resbridge
