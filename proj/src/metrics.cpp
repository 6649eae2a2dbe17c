#include "amoene/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "amoene/random.hpp"

namespace amoene {

SegMetrics seg_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) throw ShapeError("seg_metrics: shape mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  if (tp + fp + fn == 0) return {1.0, 1.0, 1.0, 1.0};
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  const double TP = static_cast<double>(tp), FP = static_cast<double>(fp), FN = static_cast<double>(fn);
  return {ratio(2 * TP, 2 * TP + FP + FN), ratio(TP, TP + FP), ratio(TP, TP + FN), ratio(TP, TP + FP + FN)};
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores/labels size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j + 1);  // 1-based average rank
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) rank_sum += midrank;
    i = j;
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ShapeError("roc_auc: labels must be 0 or 1");
    n1 += y == 1;
  }
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw ShapeError("roc_auc: both classes must be present");
  const double u = rank_sum - static_cast<double>(n1) * static_cast<double>(n1 + 1) / 2.0;
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // count of inserted positions < i
  std::uint64_t prefix(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records) {
  if (risks.size() != records.size()) throw ShapeError("c_index: risks/records size mismatch");
  const std::size_t n = risks.size();
  for (double r : risks)
    if (!std::isfinite(r)) throw NumericError("c_index: non-finite risk");

  std::vector<double> levels(risks.begin(), risks.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  auto rank_of = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), r) - levels.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].time > records[b].time; });

  // Sweep from the longest times down; everything already inserted has a
  // strictly larger time than the current tie group.
  Fenwick inserted(levels.size());
  std::uint64_t doubled_concordant = 0, pairs = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && records[order[j]].time == records[order[i]].time) ++j;
    for (std::size_t k = i; k < j; ++k) {
      const std::size_t p = order[k];
      if (!records[p].event) continue;
      const std::size_t r = rank_of(risks[p]);
      const std::uint64_t below = inserted.prefix(r);
      const std::uint64_t tied = inserted.prefix(r + 1) - below;
      doubled_concordant += 2 * below + tied;
      pairs += seen;
    }
    for (std::size_t k = i; k < j; ++k) {
      inserted.add(rank_of(risks[order[k]]));
      ++seen;
    }
    i = j;
  }
  if (pairs == 0) throw ShapeError("c_index: no comparable pairs");
  return static_cast<double>(doubled_concordant) / (2.0 * static_cast<double>(pairs));
}

double KMCurve::survival_at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

KMCurve km_fit(std::span<const SurvivalRecord> records) {
  if (records.empty()) throw ShapeError("km_fit: empty input");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });
  KMCurve curve;
  double s = 1.0;
  std::size_t at_risk = records.size();
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, d = 0;
    while (j < order.size() && records[order[j]].time == records[order[i]].time) d += records[order[j++]].event;
    if (d > 0) s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
    curve.times.push_back(records[order[i]].time);
    curve.survival.push_back(s);
    curve.at_risk.push_back(at_risk);
    curve.events.push_back(d);
    at_risk -= j - i;
    i = j;
  }
  return curve;
}

double chi2_1_sf(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

LogRankResult logrank(std::span<const SurvivalRecord> group_a, std::span<const SurvivalRecord> group_b) {
  if (group_a.empty() || group_b.empty()) throw ShapeError("logrank: both groups must be non-empty");
  struct Obs {
    double time;
    bool event;
    bool in_a;
  };
  std::vector<Obs> all;
  for (const auto& r : group_a) all.push_back({r.time, r.event, true});
  for (const auto& r : group_b) all.push_back({r.time, r.event, false});
  std::sort(all.begin(), all.end(), [](const Obs& x, const Obs& y) { return x.time < y.time; });

  LogRankResult res;
  double n_a = static_cast<double>(group_a.size()), n_b = static_cast<double>(group_b.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    double d = 0, d_a = 0, leave_a = 0, leave_b = 0;
    while (j < all.size() && all[j].time == all[i].time) {
      d += all[j].event;
      d_a += all[j].event && all[j].in_a;
      (all[j].in_a ? leave_a : leave_b) += 1.0;
      ++j;
    }
    const double n = n_a + n_b;
    if (d > 0) {
      res.observed_a += d_a;
      res.expected_a += d * n_a / n;
      if (n > 1) res.variance += n_a * n_b * d * (n - d) / (n * n * (n - 1));
    }
    n_a -= leave_a;
    n_b -= leave_b;
    i = j;
  }
  if (res.variance > 0.0) {
    const double diff = res.observed_a - res.expected_a;
    res.chi_square = diff * diff / res.variance;
    res.p_value = chi2_1_sf(res.chi_square);
  }
  return res;
}

LogRankResult logrank_split(std::span<const int> predicted, std::span<const SurvivalRecord> records) {
  if (predicted.size() != records.size()) throw ShapeError("logrank_split: size mismatch");
  std::vector<SurvivalRecord> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) (predicted[i] ? pos : neg).push_back(records[i]);
  return logrank(pos, neg);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ReaderSummary simulated_reader(std::span<const RaterAnnotations> annotations,
                               std::span<const SurvivalRecord> records, std::size_t n_boot, std::uint64_t seed) {
  if (records.empty()) throw ShapeError("simulated_reader: empty records");
  if (annotations.size() != records.size()) throw ShapeError("simulated_reader: annotation count mismatch");
  if (n_boot < 1) throw ShapeError("simulated_reader: n_boot must be at least 1");
  ReaderSummary out;
  out.p_values.reserve(n_boot);
  std::vector<SurvivalRecord> pos, neg;
  for (std::size_t round = 0; round < n_boot; ++round) {
    Rng rng(derive_seed(seed, round));
    pos.clear();
    neg.clear();
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto rater = uniform_index(rng, 3);
      (annotations[i][rater] ? pos : neg).push_back(records[i]);
    }
    out.p_values.push_back(pos.empty() || neg.empty() ? 1.0 : logrank(pos, neg).p_value);
  }
  out.mean_p = std::accumulate(out.p_values.begin(), out.p_values.end(), 0.0) / static_cast<double>(n_boot);
  out.median_p = quantile(out.p_values, 0.5);
  out.q025 = quantile(out.p_values, 0.025);
  out.q975 = quantile(out.p_values, 0.975);
  return out;
}

double youden_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) throw ShapeError("youden_threshold: size mismatch");
  std::vector<double> cand(scores.begin(), scores.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  double best_t = cand.front(), best_j = -2.0;
  for (double t : cand) {
    const auto r = binary_rates(scores, labels, t);
    const double j = r.recall + r.specificity - 1.0;
    if (j > best_j) {
      best_j = j;
      best_t = t;
    }
  }
  return best_t;
}

BinaryRates binary_rates(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("binary_rates: size mismatch");
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return {tp + fn > 0 ? tp / (tp + fn) : 0.0, tn + fp > 0 ? tn / (tn + fp) : 0.0};
}

}  // namespace amoene
