#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace memprobe {

// Dense real vector. All arithmetic in the library is 64-bit.
using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const;
  double frobenius_norm() const;
  // max |m(i,j) - m(j,i)|; requires a square matrix.
  double symmetry_defect() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Vector matvec(const Matrix& m, std::span<const double> v);
// mᵀ v without forming the transpose.
Vector matvec_transposed(const Matrix& m, std::span<const double> v);
Matrix matmul(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> v);

// xoshiro256** seeded through splitmix64. The stream depends only on the
// seed and the sequence of calls, so it is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; caches the second variate.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);
// Stable per-item seed, e.g. for sample `index` of a batch run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

Vector gaussian_vector(Rng& rng, std::size_t len, double sigma);

struct SymEigResult {
  Vector values;   // descending
  Matrix vectors;  // column j is the eigenvector of values[j]
};

// Cyclic Jacobi on (m + mᵀ)/2. Throws if m is not square, if the symmetry
// defect exceeds 1e-8, or if the sweep cap is hit before off-diagonal mass
// drops below tol·‖m‖_F.
SymEigResult sym_eig_decompose(const Matrix& m, double tol = 1e-12, int max_sweeps = 100);
Vector sym_eig(const Matrix& m, double tol = 1e-12);

// Largest singular value via power iteration on mᵀm from a seeded start.
double power_iteration_sigma_max(const Matrix& m, int iters = 500, std::uint64_t seed = 42);

}  // namespace memprobe
