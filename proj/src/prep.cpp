#include "amoene/prep.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "amoene/random.hpp"

namespace amoene {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw ShapeError("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw ShapeError("row index out of range");
    std::copy(row(idx[i]).begin(), row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> idx) const {
  Matrix out(rows, idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j)
    if (idx[j] >= cols) throw ShapeError("column index out of range");
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < idx.size(); ++j) out(r, j) = (*this)(r, idx[j]);
  return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("hconcat: row count mismatch");
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols));
  }
  return out;
}

namespace {

void require_finite(const Matrix& x, const char* what) {
  for (double v : x.data)
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite input");
}

std::vector<double> column_means(const Matrix& x) {
  std::vector<double> m(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) m[c] += x(r, c);
  for (auto& v : m) v /= static_cast<double>(x.rows);
  return m;
}

}  // namespace

Scaler fit_scaler(const Matrix& x) {
  if (x.rows == 0 || x.cols == 0) throw ShapeError("fit_scaler: empty matrix");
  require_finite(x, "fit_scaler");
  Scaler s;
  s.mean = column_means(x);
  s.std.assign(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) s.std[c] += (x(r, c) - s.mean[c]) * (x(r, c) - s.mean[c]);
  for (std::size_t c = 0; c < x.cols; ++c) {
    const double sd = std::sqrt(s.std[c] / static_cast<double>(x.rows));
    // constant columns pass through
    if (sd < 1e-12 * std::max(1.0, std::abs(s.mean[c]))) {
      s.std[c] = 1.0;
      s.mean[c] = 0.0;
    } else {
      s.std[c] = sd;
    }
  }
  return s;
}

Matrix apply(const Scaler& s, const Matrix& x) {
  if (x.cols != s.mean.size()) throw ShapeError("scaler: column count mismatch");
  Matrix out = x;
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = (x(r, c) - s.mean[c]) / s.std[c];
  return out;
}

Pca pca_fit(const Matrix& x, std::size_t n_components) {
  if (x.rows < 2 || x.cols == 0) throw ShapeError("pca_fit: need at least two rows");
  if (n_components < 1 || n_components > std::min(x.rows - 1, x.cols))
    throw ShapeError("pca_fit: n_components must lie in [1, min(rows-1, cols)]");
  require_finite(x, "pca_fit");
  Pca p;
  p.mean = column_means(x);
  Eigen::MatrixXd c(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t j = 0; j < x.cols; ++j) c(r, j) = x(r, j) - p.mean[j];
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(x.rows - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const auto& vals = es.eigenvalues();  // ascending
  const auto& vecs = es.eigenvectors();
  double total = 0.0;
  for (Eigen::Index i = 0; i < vals.size(); ++i) total += std::max(vals[i], 0.0);
  p.components = Matrix(n_components, x.cols);
  for (std::size_t k = 0; k < n_components; ++k) {
    const auto src = static_cast<Eigen::Index>(x.cols - 1 - k);
    Eigen::VectorXd v = vecs.col(src);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    for (std::size_t j = 0; j < x.cols; ++j) p.components(k, j) = v[static_cast<Eigen::Index>(j)];
    const double ev = std::max(vals[src], 0.0);
    p.explained_variance.push_back(ev);
    p.explained_variance_ratio.push_back(total > 0.0 ? ev / total : 0.0);
  }
  return p;
}

Matrix pca_apply(const Pca& p, const Matrix& x) {
  if (x.cols != p.mean.size()) throw ShapeError("pca_apply: column count mismatch");
  Matrix out(x.rows, p.components.rows);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t k = 0; k < p.components.rows; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += (x(r, j) - p.mean[j]) * p.components(k, j);
      out(r, k) = s;
    }
  return out;
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

LassoResult lasso_select(const Matrix& x, std::span<const double> y, const LassoOptions& options) {
  if (x.rows == 0 || x.cols == 0) throw ShapeError("lasso_select: empty design");
  if (y.size() != x.rows) throw ShapeError("lasso_select: response length mismatch");
  if (!(options.lambda >= 0.0) || !std::isfinite(options.lambda)) throw ShapeError("lasso_select: lambda must be >= 0");
  if (!(options.l1_ratio >= 0.0 && options.l1_ratio <= 1.0)) throw ShapeError("lasso_select: l1_ratio must lie in [0,1]");
  require_finite(x, "lasso_select");
  for (double v : y)
    if (!std::isfinite(v)) throw NumericError("lasso_select: non-finite response");

  const std::size_t n = x.rows, p = x.cols;
  const double nd = static_cast<double>(n);
  const auto xm = column_means(x);
  const double ym = std::accumulate(y.begin(), y.end(), 0.0) / nd;
  // column-major centered copy
  std::vector<double> xc(n * p), norm2(p, 0.0);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      xc[j * n + i] = x(i, j) - xm[j];
      norm2[j] += xc[j * n + i] * xc[j * n + i];
    }
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - ym;

  const double l1 = options.lambda * options.l1_ratio, l2 = options.lambda * (1.0 - options.l1_ratio);
  LassoResult res;
  res.coef.assign(p, 0.0);
  bool converged = false;
  while (res.sweeps < options.max_sweeps) {
    ++res.sweeps;
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (norm2[j] == 0.0) continue;
      const double* col = &xc[j * n];
      const double old = res.coef[j];
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += col[i] * r[i];
      rho = rho / nd + norm2[j] / nd * old;
      const double updated = soft_threshold(rho, l1) / (norm2[j] / nd + l2);
      const double d = updated - old;
      if (d != 0.0) {
        for (std::size_t i = 0; i < n; ++i) r[i] -= d * col[i];
        res.coef[j] = updated;
      }
      max_change = std::max(max_change, std::abs(d));
    }
    if (max_change < options.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("lasso_select: coordinate descent did not converge");
  res.intercept = ym;
  for (std::size_t j = 0; j < p; ++j) {
    res.intercept -= xm[j] * res.coef[j];
    if (res.coef[j] != 0.0) res.selected.push_back(j);
  }
  return res;
}

namespace {

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Nearest neighbour of every row (ties to the lowest index).
std::vector<std::size_t> nearest_neighbours(const Matrix& x) {
  std::vector<std::size_t> nn(x.rows, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.rows; ++j) {
      if (j == i) continue;
      const double d = sqdist(x.row(i), x.row(j));
      if (d < best) {
        best = d;
        nn[i] = j;
      }
    }
  }
  return nn;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> tomek_links(const Matrix& x, std::span<const int> y) {
  if (y.size() != x.rows) throw ShapeError("tomek_links: label count mismatch");
  std::vector<std::pair<std::size_t, std::size_t>> links;
  if (x.rows < 2) return links;
  const auto nn = nearest_neighbours(x);
  for (std::size_t i = 0; i < x.rows; ++i)
    if (nn[i] > i && nn[nn[i]] == i && y[i] != y[nn[i]]) links.emplace_back(i, nn[i]);
  return links;
}

SmoteResult smote_tomek(const Matrix& x, std::span<const int> y, std::size_t k_neighbors, std::uint64_t seed) {
  if (y.size() != x.rows) throw ShapeError("smote_tomek: label count mismatch");
  if (k_neighbors < 1) throw ShapeError("smote_tomek: k_neighbors must be >= 1");
  require_finite(x, "smote_tomek");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw ShapeError("smote_tomek: labels must be 0 or 1");
    by_class[y[i]].push_back(i);
  }
  const int minority = by_class[1].size() < by_class[0].size() ? 1 : 0;
  const auto& pool = by_class[minority];
  if (pool.size() < 2) throw ShapeError("smote_tomek: minority class needs at least two samples");
  const std::size_t needed = by_class[1 - minority].size() - pool.size();
  const std::size_t k = std::min(k_neighbors, pool.size() - 1);

  // k nearest minority neighbours of each minority point
  std::vector<std::vector<std::size_t>> neigh(pool.size());
  for (std::size_t a = 0; a < pool.size(); ++a) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t b = 0; b < pool.size(); ++b)
      if (b != a) d.emplace_back(sqdist(x.row(pool[a]), x.row(pool[b])), b);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    for (std::size_t q = 0; q < k; ++q) neigh[a].push_back(d[q].second);
  }

  SmoteResult out;
  Matrix all(x.rows + needed, x.cols);
  std::copy(x.data.begin(), x.data.end(), all.data.begin());
  std::vector<int> labels(y.begin(), y.end());
  Rng rng(seed);
  for (std::size_t s = 0; s < needed; ++s) {
    const std::size_t a = uniform_index(rng, pool.size());
    const std::size_t b = neigh[a][uniform_index(rng, k)];
    double t;
    do t = uniform01(rng);
    while (t == 0.0);
    auto dst = all.row(x.rows + s);
    const auto pa = x.row(pool[a]), pb = x.row(pool[b]);
    for (std::size_t c = 0; c < x.cols; ++c) dst[c] = pa[c] + t * (pb[c] - pa[c]);
    labels.push_back(minority);
    out.parents.push_back({pool[a], pool[b]});
    out.t.push_back(t);
  }
  out.synthetic = needed;

  std::vector<std::uint8_t> drop(all.rows, 0);
  for (auto [i, j] : tomek_links(all, labels)) drop[i] = drop[j] = 1;
  for (std::size_t i = 0; i < all.rows; ++i) (drop[i] ? out.removed : out.kept).push_back(i);
  out.x = all.select_rows(out.kept);
  for (auto i : out.kept) out.y.push_back(labels[i]);
  return out;
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::pos_vs_neg: return "pos_vs_neg";
    case Scheme::low_vs_high: return "low_vs_high";
    case Scheme::grade3: return "grade3";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "pos_vs_neg") return Scheme::pos_vs_neg;
  if (s == "low_vs_high") return Scheme::low_vs_high;
  if (s == "grade3") return Scheme::grade3;
  throw ConfigError("unknown dichotomization scheme '" + s + "'");
}

int dichotomize(int grade, Scheme scheme) {
  if (grade < 0 || grade > 3) throw ShapeError("grade must lie in 0..3");
  switch (scheme) {
    case Scheme::pos_vs_neg: return grade >= 1;
    case Scheme::low_vs_high: return grade >= 2;
    case Scheme::grade3: return grade == 3;
  }
  return 0;
}

}  // namespace amoene
