#pragma once

// Independent reference computations shared by unit and acceptance tests.
// Deliberately naive; nothing here calls into the library's algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "amoene/survival.hpp"

namespace oracle {

// O(N^2) concordance over ordered pairs.
inline double brute_c_index(const std::vector<double>& risk, const std::vector<amoene::SurvivalRecord>& rec) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i)
    for (std::size_t j = 0; j < rec.size(); ++j) {
      if (i == j || !rec[j].event || !(rec[i].time > rec[j].time)) continue;
      den += 1.0;
      if (risk[i] < risk[j]) num += 1.0;
      else if (risk[i] == risk[j]) num += 0.5;
    }
  return num / den;
}

inline std::size_t comparable_pairs(const std::vector<amoene::SurvivalRecord>& rec) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < rec.size(); ++i)
    for (std::size_t j = 0; j < rec.size(); ++j)
      if (i != j && rec[j].event && rec[i].time > rec[j].time) ++n;
  return n;
}

// -log of the admissible-set probability, enumerating each bin's
// probability under softmax(z).
inline double enumerated_mtlr_nll(const std::vector<double>& z, const std::vector<std::uint8_t>& admissible) {
  double total = 0.0;
  for (double v : z) total += std::exp(v);
  double p = 0.0;
  for (std::size_t b = 0; b < z.size(); ++b)
    if (admissible[b]) p += std::exp(z[b]) / total;
  return -std::log(p);
}

// Cyclic Jacobi eigen-solver for small symmetric matrices (row-major n x n).
// Returns eigenvalues descending with matching column eigenvectors.
inline std::pair<std::vector<double>, std::vector<double>> jacobi_eigen(std::vector<double> a, std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p * n + q]) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  std::vector<double> vals(n), vecs(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    vals[j] = a[order[j] * n + order[j]];
    for (std::size_t k = 0; k < n; ++k) vecs[k * n + j] = v[k * n + order[j]];
  }
  return {vals, vecs};
}

}  // namespace oracle
