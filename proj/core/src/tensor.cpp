#include "resbridge/tensor.hpp"

#include <cmath>

namespace resbridge {

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

static void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  Tensor r = a;
  for (int64_t i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  Tensor r = a;
  for (int64_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

Tensor scale(const Tensor& a, double s) {
  Tensor r = a;
  for (int64_t i = 0; i < r.size(); ++i) r[i] *= s;
  return r;
}

Tensor axpy(double alpha, const Tensor& x, const Tensor& y) {
  check_same(x, y, "axpy");
  Tensor r = y;
  for (int64_t i = 0; i < r.size(); ++i) r[i] += alpha * x[i];
  return r;
}

double dot(const Tensor& a, const Tensor& b) {
  check_same(a, b, "dot");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

double norm(const Tensor& a) { return std::sqrt(squared_norm(a)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul shape mismatch");
  }
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  // i-k-j order so the inner loop streams both b and c.
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = ap[i * k + kk];
      const double* brow = bp + kk * n;
      double* crow = cp + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

}  // namespace resbridge
