#pragma once

// Feature-table preprocessing: scaling, PCA, elastic-net selection,
// SMOTE-Tomek rebalancing and grade dichotomization.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amoene/error.hpp"

namespace amoene {

// Dense row-major table.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::vector<double> col(std::size_t c) const;

  Matrix select_rows(std::span<const std::size_t> idx) const;
  Matrix select_cols(std::span<const std::size_t> idx) const;
};

Matrix hconcat(const Matrix& a, const Matrix& b);

struct Scaler {
  std::vector<double> mean, std;  // population std, 1 for constant columns
};

Scaler fit_scaler(const Matrix& x);
Matrix apply(const Scaler& s, const Matrix& x);

struct Pca {
  std::vector<double> mean;
  Matrix components;  // n_components x cols
  std::vector<double> explained_variance;
  std::vector<double> explained_variance_ratio;
};

// Covariance eigendecomposition; the largest-magnitude loading of every
// component is positive.
Pca pca_fit(const Matrix& x, std::size_t n_components);
Matrix pca_apply(const Pca& p, const Matrix& x);

struct LassoOptions {
  double lambda = 0.0;
  double l1_ratio = 1.0;  // 1 = lasso, 0 = ridge
  double tol = 1e-8;
  std::size_t max_sweeps = 100000;
};

struct LassoResult {
  std::vector<double> coef;
  double intercept = 0.0;
  std::vector<std::size_t> selected;  // nonzero coefficients
  std::size_t sweeps = 0;
};

double soft_threshold(double z, double gamma);

// Minimizes (1/2N)||y - b0 - Xb||^2 + lambda (a|b|_1 + (1-a)/2 |b|^2) by
// cyclic coordinate descent on centered data.
LassoResult lasso_select(const Matrix& x, std::span<const double> y, const LassoOptions& options);

struct SmoteResult {
  Matrix x;
  std::vector<int> y;
  std::size_t synthetic = 0;  // appended after the originals, before Tomek removal
  std::vector<std::array<std::size_t, 2>> parents;  // per synthetic row
  std::vector<double> t;
  std::vector<std::size_t> removed;  // pre-removal row indices dropped as Tomek links
  std::vector<std::size_t> kept;     // pre-removal row index of every output row
};

// Oversample the minority class to parity, then drop both ends of every
// opposite-label mutual-nearest-neighbour pair. Row order is preserved.
SmoteResult smote_tomek(const Matrix& x, std::span<const int> y, std::size_t k_neighbors, std::uint64_t seed);

// Tomek links among the given rows as (i, j) with i < j.
std::vector<std::pair<std::size_t, std::size_t>> tomek_links(const Matrix& x, std::span<const int> y);

enum class Scheme { pos_vs_neg, low_vs_high, grade3 };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);
int dichotomize(int grade, Scheme scheme);

}  // namespace amoene
