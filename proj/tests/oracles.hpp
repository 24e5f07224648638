#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "memprobe/numerics.hpp"

namespace oracle {

using memprobe::Matrix;
using memprobe::Rng;
using memprobe::Vector;

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline Matrix random_symmetric(Rng& rng, std::size_t n) {
  Matrix m = random_matrix(rng, n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

inline Vector random_vector(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  Vector v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Plain triple loop.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// Householder QR of a square matrix: a = q r.
inline void householder_qr(const Matrix& a, Matrix& q, Matrix& r) {
  const std::size_t n = a.rows();
  r = a;
  q = Matrix::identity(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    Vector v(n, 0.0);
    const double alpha = r(k, k) > 0 ? -norm : norm;
    for (std::size_t i = k; i < n; ++i) v[i] = r(i, k);
    v[k] -= alpha;
    double vv = 0.0;
    for (double x : v) vv += x * x;
    if (vv == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < n; ++i) s += v[i] * r(i, j);
      for (std::size_t i = k; i < n; ++i) r(i, j) -= 2.0 * v[i] * s / vv;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k; j < n; ++j) s += q(i, j) * v[j];
      for (std::size_t j = k; j < n; ++j) q(i, j) -= 2.0 * s * v[j] / vv;
    }
  }
}

// Eigenvalues of a symmetric matrix by Wilkinson-shifted QR iteration with
// deflation, descending.
inline Vector qr_eigenvalues(Matrix a) {
  Vector vals;
  std::size_t n = a.rows();
  const double scale = std::max(1.0, a.frobenius_norm());
  while (n > 1) {
    for (int it = 0; it < 10000; ++it) {
      double off = 0.0;
      for (std::size_t j = 0; j + 1 < n; ++j) off = std::max(off, std::abs(a(n - 1, j)));
      if (off < 1e-15 * scale) break;
      const double p = a(n - 2, n - 2), q = a(n - 2, n - 1), s = a(n - 1, n - 1);
      const double delta = 0.5 * (p - s);
      const double sign = delta >= 0 ? 1.0 : -1.0;
      const double mu = s - sign * q * q / (std::abs(delta) + std::sqrt(delta * delta + q * q) + 1e-300);
      for (std::size_t i = 0; i < n; ++i) a(i, i) -= mu;
      Matrix qm, rm;
      householder_qr(a, qm, rm);
      a = naive_matmul(rm, qm);
      for (std::size_t i = 0; i < n; ++i) a(i, i) += mu;
    }
    vals.push_back(a(n - 1, n - 1));
    Matrix smaller(n - 1, n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = 0; j + 1 < n; ++j) smaller(i, j) = a(i, j);
    a = smaller;
    --n;
  }
  if (n == 1) vals.push_back(a(0, 0));
  std::sort(vals.begin(), vals.end(), std::greater<>());
  return vals;
}

// Central difference of a scalar function of one coordinate of `x`.
inline double central_diff(const std::function<double(const Vector&)>& f, Vector x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double plus = f(x);
  x[i] = x0 - h;
  const double minus = f(x);
  return (plus - minus) / (2.0 * h);
}

}  // namespace oracle
