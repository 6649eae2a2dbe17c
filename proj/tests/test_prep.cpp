#include <cmath>
#include <numeric>
#include <set>

#include "amoene/prep.hpp"
#include "amoene/random.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace amoene;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.data) v = standard_normal(rng);
  return m;
}

// Least squares with intercept via Gaussian elimination on the centered
// normal equations.
std::vector<double> least_squares(const Matrix& x, const std::vector<double>& y) {
  const std::size_t n = x.rows, p = x.cols;
  std::vector<double> xm(p, 0.0);
  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ym += y[i] / n;
    for (std::size_t j = 0; j < p; ++j) xm[j] += x(i, j) / n;
  }
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) a[j][k] += (x(i, j) - xm[j]) * (x(i, k) - xm[k]);
      a[j][p] += (x(i, j) - xm[j]) * (y[i] - ym);
    }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> b(p);
  for (std::size_t j = 0; j < p; ++j) b[j] = a[j][p] / a[j][j];
  return b;
}

}  // namespace

TEST_CASE("standard scaling") {
  auto x = Matrix::from_rows({{1, 5}, {2, 5}, {3, 5}});
  auto s = fit_scaler(x);
  auto z = apply(s, x);
  const double v = std::sqrt(1.5);
  CHECK(std::abs(z(0, 0) + v) < 1e-12);
  CHECK(z(1, 0) == 0.0);
  CHECK(std::abs(z(2, 0) - v) < 1e-12);
  CHECK(std::abs(z(0, 0) + 1.2247) < 1e-4);
  for (std::size_t r = 0; r < 3; ++r) CHECK(z(r, 1) == 5.0);
  CHECK_THROWS_AS(apply(s, Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(fit_scaler(Matrix()), ShapeError);

  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    auto m = random_matrix(rng, 30, 5);
    for (auto& e : m.data) e = e * 40.0 + 300.0;
    auto zz = apply(fit_scaler(m), m);
    for (std::size_t c = 0; c < 5; ++c) {
      auto col = zz.col(c);
      double mean = std::accumulate(col.begin(), col.end(), 0.0) / 30.0, ss = 0.0;
      for (double e : col) ss += (e - mean) * (e - mean);
      CHECK(std::abs(mean) < 1e-10);
      CHECK(std::abs(std::sqrt(ss / 30.0) - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("scaler fitted on a training split differs from a train+test refit") {
  Rng rng(3);
  auto all = random_matrix(rng, 40, 3);
  std::vector<std::size_t> train(30), test(10);
  std::iota(train.begin(), train.end(), 0);
  std::iota(test.begin(), test.end(), 30);
  for (std::size_t r = 30; r < 40; ++r) all(r, 0) += 3.0;  // shifted held-out rows
  auto held = all.select_rows(test);
  auto a = apply(fit_scaler(all.select_rows(train)), held);
  auto b = apply(fit_scaler(all), held);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
  CHECK(diff > 0.1);
}

TEST_CASE("pca") {
  auto line = Matrix::from_rows({{0, 0}, {1, 2}, {2, 4}, {3, 6}, {-1, -2}});
  auto p = pca_fit(line, 1);
  CHECK(std::abs(p.explained_variance_ratio[0] - 1.0) < 1e-12);
  CHECK(std::abs(p.components(0, 0) - 1.0 / std::sqrt(5.0)) < 1e-12);
  CHECK(p.components(0, 1) > 0.0);

  Rng rng(4);
  auto iso = random_matrix(rng, 5000, 3);
  auto q = pca_fit(iso, 2);
  CHECK(std::abs(q.explained_variance_ratio[0] - 1.0 / 3.0) < 0.05);
  CHECK(std::abs(q.explained_variance_ratio[1] - 1.0 / 3.0) < 0.05);
  CHECK(q.explained_variance[0] >= q.explained_variance[1]);

  CHECK_THROWS_AS(pca_fit(line, 2 + 1), ShapeError);
  CHECK_THROWS_AS(pca_fit(line, 0), ShapeError);
  CHECK_THROWS_AS(pca_apply(p, Matrix(2, 3)), ShapeError);
}

TEST_CASE("pca matches an independent eigendecomposition") {
  auto x = Matrix::from_rows({{2.0, 0.5, 1.0}, {-1.0, 3.0, 0.0}, {0.5, -2.0, 4.0}});
  auto p = pca_fit(x, 2);
  std::vector<double> mean(3, 0.0), cov(9, 0.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) mean[c] += x(r, c) / 3.0;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) cov[a * 3 + b] += (x(r, a) - mean[a]) * (x(r, b) - mean[b]) / 2.0;
  auto [vals, vecs] = oracle::jacobi_eigen(cov, 3);
  auto proj = pca_apply(p, x);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::abs(p.explained_variance[k] - vals[k]) < 1e-10);
    // apply the same sign rule to the oracle vector
    std::size_t arg = 0;
    for (std::size_t j = 1; j < 3; ++j)
      if (std::abs(vecs[j * 3 + k]) > std::abs(vecs[arg * 3 + k])) arg = j;
    const double sign = vecs[arg * 3 + k] < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(p.components(k, j) - sign * vecs[j * 3 + k]) < 1e-10);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += (x(r, j) - mean[j]) * sign * vecs[j * 3 + k];
      CHECK(std::abs(proj(r, k) - s) < 1e-10);
    }
  }
}

TEST_CASE("full-rank pca preserves pairwise distances") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    auto x = random_matrix(rng, 12, 4);
    auto z = pca_apply(pca_fit(x, 4), x);
    for (std::size_t a = 0; a < 12; ++a)
      for (std::size_t b = a + 1; b < 12; ++b) {
        double d1 = 0, d2 = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          d1 += (x(a, j) - x(b, j)) * (x(a, j) - x(b, j));
          d2 += (z(a, j) - z(b, j)) * (z(a, j) - z(b, j));
        }
        CHECK(std::abs(std::sqrt(d1) - std::sqrt(d2)) < 1e-8);
      }
  }
}

TEST_CASE("lasso examples") {
  Rng rng(6);
  auto x = apply(fit_scaler(random_matrix(rng, 50, 6)), random_matrix(rng, 50, 6));
  x = apply(fit_scaler(x), x);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = 2.0 * x(i, 0) - x(i, 3) + 0.3 * standard_normal(rng) + 5.0;

  const double ym = std::accumulate(y.begin(), y.end(), 0.0) / 50.0;
  double lmax = 0.0;
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 50; ++i) s += x(i, j) * (y[i] - ym);
    lmax = std::max(lmax, std::abs(s) / 50.0);
  }
  auto zero = lasso_select(x, y, {.lambda = lmax});
  CHECK(zero.selected.empty());
  for (double b : zero.coef) CHECK(b == 0.0);
  CHECK_FALSE(lasso_select(x, y, {.lambda = lmax * 0.99}).selected.empty());

  auto ols = lasso_select(x, y, {.lambda = 0.0});
  auto ref = least_squares(x, y);
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(ols.coef[j] - ref[j]) < 1e-6);

  // orthogonal centered columns with x_j'x_j = N
  const std::size_t n = 8;
  Matrix o(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    o(i, 0) = i % 2 ? 1.0 : -1.0;
    o(i, 1) = (i / 2) % 2 ? 1.0 : -1.0;
    o(i, 2) = (i / 4) % 2 ? 1.0 : -1.0;
  }
  std::vector<double> yo(n);
  for (std::size_t i = 0; i < n; ++i) yo[i] = 0.9 * o(i, 0) - 0.2 * o(i, 1) + 0.05 * o(i, 2) + 0.01 * i;
  for (double lam : {0.0, 0.03, 0.1, 0.5, 1.0}) {
    auto res = lasso_select(o, yo, {.lambda = lam});
    for (std::size_t j = 0; j < 3; ++j) {
      double xty = 0.0;
      for (std::size_t i = 0; i < n; ++i) xty += o(i, j) * yo[i];
      CHECK(std::abs(res.coef[j] - soft_threshold(xty / n, lam)) < 1e-12);
    }
  }

  CHECK_THROWS_AS(lasso_select(x, y, {.lambda = -1.0}), ShapeError);
  CHECK_THROWS_AS(lasso_select(x, std::vector<double>(3), {}), ShapeError);
  auto bad = y;
  bad[0] = NAN;
  CHECK_THROWS_AS(lasso_select(x, bad, {}), NumericError);
  CHECK_THROWS_AS(lasso_select(x, y, {.lambda = 0.0, .l1_ratio = 1.0, .tol = 0.0, .max_sweeps = 3}), NumericError);
}

TEST_CASE("lasso sparsity is monotone in lambda for orthonormal designs") {
  Rng rng(7);
  const std::size_t n = 16;
  Matrix o(n, 4);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 4; ++j) o(i, j) = (i >> j) & 1 ? 1.0 : -1.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> y(n);
    for (auto& v : y) v = standard_normal(rng);
    std::size_t prev = 5;
    for (double lam = 0.0; lam < 1.5; lam += 0.05) {
      auto res = lasso_select(o, y, {.lambda = lam, .l1_ratio = 0.5});
      CHECK(res.selected.size() <= prev);
      prev = res.selected.size();
    }
  }
}

TEST_CASE("smote_tomek examples") {
  // balanced and well separated: untouched
  auto x = Matrix::from_rows({{0.0}, {0.2}, {5.0}, {5.3}});
  std::vector<int> y{0, 0, 1, 1};
  auto same = smote_tomek(x, y, 5, 1);
  CHECK(same.synthetic == 0);
  CHECK(same.x.data == x.data);
  CHECK(same.y == y);

  auto twins = Matrix::from_rows({{0.0, 0.0}, {0.5, 0.1}, {0.2, 0.9}, {0.7, 0.7}, {4.0, 4.0}, {4.0, 4.0}});
  std::vector<int> yt{0, 0, 0, 0, 1, 1};
  auto t = smote_tomek(twins, yt, 5, 2);
  CHECK(t.synthetic == 2);
  for (std::size_t r = 0; r < t.x.rows; ++r)
    if (t.y[r] == 1) {
      CHECK(t.x(r, 0) == 4.0);
      CHECK(t.x(r, 1) == 4.0);
    }

  auto line = Matrix::from_rows({{0.0}, {0.1}, {0.05}, {0.12}, {1.0}, {2.0}});
  std::vector<int> yl{0, 0, 0, 0, 1, 1};
  auto l = smote_tomek(line, yl, 5, 3);
  CHECK(l.synthetic == 2);
  CHECK(l.removed.empty());
  for (std::size_t r = 6; r < l.x.rows; ++r) {
    CHECK(l.x(r, 0) >= 1.0);
    CHECK(l.x(r, 0) <= 2.0);
  }

  // a majority point sitting next to a minority point forms a Tomek link
  auto link = Matrix::from_rows({{0.0}, {0.1}, {0.2}, {1.0}, {1.05}, {3.0}, {3.1}});
  std::vector<int> yk{0, 0, 0, 0, 1, 1, 1};
  auto lk = smote_tomek(link, yk, 5, 4);
  CHECK(std::find(lk.removed.begin(), lk.removed.end(), 3) != lk.removed.end());
  CHECK(std::find(lk.removed.begin(), lk.removed.end(), 4) != lk.removed.end());

  auto a = smote_tomek(twins, yt, 3, 99), b = smote_tomek(twins, yt, 3, 99);
  CHECK(a.x.data == b.x.data);

  CHECK_THROWS_AS(smote_tomek(x, std::vector<int>{0, 0, 0, 1}, 5, 1), ShapeError);
  CHECK_THROWS_AS(smote_tomek(x, y, 0, 1), ShapeError);
  CHECK_THROWS_AS(smote_tomek(x, std::vector<int>{0, 1}, 5, 1), ShapeError);
}

TEST_CASE("smote_tomek properties") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n0 = 20 + uniform_index(rng, 10), n1 = 3 + uniform_index(rng, 8);
    Matrix x(n0 + n1, 3);
    std::vector<int> y;
    for (std::size_t i = 0; i < n0 + n1; ++i) {
      const int c = i >= n0;
      y.push_back(c);
      for (std::size_t j = 0; j < 3; ++j) x(i, j) = standard_normal(rng) + c * 1.0;
    }
    auto res = smote_tomek(x, y, 5, trial);
    CHECK(res.synthetic == n0 - n1);

    // rebuild the pre-removal table
    Matrix full(n0 + n1 + res.synthetic, 3);
    std::copy(x.data.begin(), x.data.end(), full.data.begin());
    std::vector<int> fy = y;
    for (std::size_t s = 0; s < res.synthetic; ++s) {
      const auto [a, b] = res.parents[s];
      CHECK(y[a] == 1);
      CHECK(y[b] == 1);
      CHECK(res.t[s] > 0.0);
      CHECK(res.t[s] < 1.0);
      for (std::size_t j = 0; j < 3; ++j) full(n0 + n1 + s, j) = x(a, j) + res.t[s] * (x(b, j) - x(a, j));
      fy.push_back(1);
    }
    // each synthetic row lies on the segment between its parents
    for (std::size_t k = 0; k < res.kept.size(); ++k) {
      const auto src = res.kept[k];
      if (src < n0 + n1) continue;
      const auto [a, b] = res.parents[src - n0 - n1];
      const double t = res.t[src - n0 - n1];
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(res.x(k, j) - ((1 - t) * x(a, j) + t * x(b, j))) < 1e-10);
    }
    std::set<std::size_t> linked;
    for (auto [i, j] : tomek_links(full, fy)) {
      linked.insert(i);
      linked.insert(j);
    }
    CHECK(std::set<std::size_t>(res.removed.begin(), res.removed.end()) == linked);
    CHECK(res.kept.size() + res.removed.size() == full.rows);
  }
}

TEST_CASE("dichotomize") {
  for (auto s : {Scheme::pos_vs_neg, Scheme::low_vs_high, Scheme::grade3}) {
    CHECK(dichotomize(0, s) == 0);
    CHECK(dichotomize(3, s) == 1);
    CHECK(scheme_from_string(to_string(s)) == s);
  }
  CHECK(dichotomize(2, Scheme::pos_vs_neg) == 1);
  CHECK(dichotomize(2, Scheme::low_vs_high) == 1);
  CHECK(dichotomize(2, Scheme::grade3) == 0);
  CHECK(dichotomize(1, Scheme::low_vs_high) == 0);
  CHECK_THROWS_AS(dichotomize(4, Scheme::grade3), ShapeError);
  CHECK_THROWS_AS(scheme_from_string("nope"), ConfigError);
}
