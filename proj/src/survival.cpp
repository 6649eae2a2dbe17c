#include "amoene/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace amoene {

std::string to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::OS: return "OS";
    case OutcomeKind::DM: return "DM";
    case OutcomeKind::DFS: return "DFS";
  }
  return "?";
}

OutcomeKind outcome_from_string(const std::string& name) {
  if (name == "OS" || name == "os") return OutcomeKind::OS;
  if (name == "DM" || name == "dm") return OutcomeKind::DM;
  if (name == "DFS" || name == "dfs") return OutcomeKind::DFS;
  throw ConfigError("unknown outcome kind '" + name + "'");
}

void validate(const SurvivalRecord& record) {
  if (!(record.time > 0.0) || !std::isfinite(record.time))
    throw ShapeError("survival time must be positive and finite");
}

std::size_t BinGrid::bin_of(double time) const {
  return static_cast<std::size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), time) -
                                  boundaries.begin());
}

BinGrid make_bins(std::span<const double> times) {
  if (times.size() < 4) throw ShapeError("make_bins: at least 4 observations required");
  std::vector<double> sorted(times.begin(), times.end());
  for (double t : sorted)
    if (!(t > 0.0) || !std::isfinite(t)) throw ShapeError("make_bins: times must be positive and finite");
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw ShapeError("make_bins: degenerate distribution (all times equal)");

  const auto n = sorted.size();
  const auto t = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n)) + 0.5));
  BinGrid grid;
  for (std::size_t j = 1; j < t; ++j) {
    const double h = static_cast<double>(n - 1) * static_cast<double>(j) / static_cast<double>(t);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, n - 1);
    const double q = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (grid.boundaries.empty() || q > grid.boundaries.back()) grid.boundaries.push_back(q);
  }
  // A boundary at the minimum leaves the first bin empty.
  if (!grid.boundaries.empty() && grid.boundaries.front() <= sorted.front())
    grid.boundaries.erase(grid.boundaries.begin());
  if (grid.boundaries.empty()) throw ShapeError("make_bins: quantiles collapse to a single bin");
  return grid;
}

MTLRTarget encode_mtlr_target(const SurvivalRecord& record, const BinGrid& grid) {
  validate(record);
  MTLRTarget target;
  target.censored = !record.event;
  target.y.assign(grid.bins(), 0);
  const std::size_t b = grid.bin_of(record.time);
  if (record.event) {
    target.y[b] = 1;
  } else {
    std::fill(target.y.begin() + static_cast<std::ptrdiff_t>(b), target.y.end(), 1);
  }
  return target;
}

namespace {

void require_finite_logits(std::span<const double> z) {
  for (double v : z)
    if (!std::isfinite(v)) throw NumericError("non-finite logits");
}

}  // namespace

LossWithGrad mtlr_nll_with_grad(std::span<const double> logits, std::size_t bins,
                                std::span<const MTLRTarget> targets, Reduction reduction) {
  if (targets.empty()) throw ShapeError("mtlr_nll: empty batch");
  if (bins == 0 || logits.size() != targets.size() * bins)
    throw ShapeError("mtlr_nll: logits shape does not match targets");
  require_finite_logits(logits);
  LossWithGrad out;
  out.grad.assign(logits.size(), 0.0);
  const double norm = reduction == Reduction::mean ? 1.0 / static_cast<double>(targets.size()) : 1.0;
  std::vector<double> p(bins), q(bins);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& tg = targets[i];
    if (tg.y.size() != bins) throw ShapeError("mtlr_nll: target length does not match bin count");
    const double* z = logits.data() + i * bins;
    const double mx = *std::max_element(z, z + bins);
    double all = 0.0;
    for (std::size_t t = 0; t < bins; ++t) all += (p[t] = std::exp(z[t] - mx));
    const double lse_all = mx + std::log(all);
    double li;
    if (tg.censored) {
      double amx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < bins; ++t)
        if (tg.y[t]) amx = std::max(amx, z[t]);
      if (!std::isfinite(amx)) throw ShapeError("mtlr_nll: censored target with no admissible bin");
      double adm = 0.0;
      for (std::size_t t = 0; t < bins; ++t) adm += (q[t] = tg.y[t] ? std::exp(z[t] - amx) : 0.0);
      li = lse_all - (amx + std::log(adm));
      for (std::size_t t = 0; t < bins; ++t) out.grad[i * bins + t] = norm * (p[t] / all - q[t] / adm);
    } else {
      double zy = 0.0;
      int ones = 0;
      for (std::size_t t = 0; t < bins; ++t)
        if (tg.y[t]) {
          zy += z[t];
          ++ones;
        }
      if (ones != 1) throw ShapeError("mtlr_nll: uncensored target must be one-hot");
      li = lse_all - zy;
      for (std::size_t t = 0; t < bins; ++t)
        out.grad[i * bins + t] = norm * (p[t] / all - (tg.y[t] ? 1.0 : 0.0));
    }
    out.loss += norm * li;
  }
  return out;
}

double mtlr_nll(std::span<const double> logits, std::size_t bins, std::span<const MTLRTarget> targets,
                Reduction reduction) {
  return mtlr_nll_with_grad(logits, bins, targets, reduction).loss;
}

Tensor mtlr_nll(Graph& graph, const Tensor& logits, std::span<const MTLRTarget> targets, Reduction reduction) {
  auto lg = mtlr_nll_with_grad(logits.data(), logits.cols(), targets, reduction);
  if (logits.rows() != targets.size()) throw ShapeError("mtlr_nll: batch size mismatch");
  auto grad = std::make_shared<std::vector<double>>(std::move(lg.grad));
  Tensor z = logits;
  return graph.record(Tensor({1}, {lg.loss}), {logits}, [z, grad](std::span<const double> G) mutable {
    if (!z.requires_grad()) return;
    auto g = z.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[0] * (*grad)[i];
  });
}

std::vector<double> survival_curve(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("survival_curve: empty logits");
  require_finite_logits(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) s += (p[t] = std::exp(logits[t] - mx));
  std::vector<double> S(p.size(), 0.0);
  double tail = 0.0;
  for (std::size_t j = p.size(); j-- > 0;) {
    S[j] = std::min(1.0, tail);
    tail += p[j] / s;
  }
  return S;
}

double risk_score(std::span<const double> logits) {
  double area = 0.0;
  for (double s : survival_curve(logits)) area += s;
  return -area;
}

ClassWeights class_weights(std::span<const int> labels) {
  std::size_t c0 = 0, c1 = 0;
  for (int y : labels) {
    if (y == 0) ++c0;
    else if (y == 1) ++c1;
    else throw ShapeError("class_weights: labels must be 0 or 1");
  }
  if (c0 == 0 || c1 == 0) throw ShapeError("class_weights: both classes must be present");
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(c0)), n / (2.0 * static_cast<double>(c1))};
}

double weighted_censored_bce(double p, int label, ClassWeights weights) {
  if (!(p > 0.0 && p < 1.0)) throw ShapeError("weighted_censored_bce: p must lie in (0,1)");
  if (label != 0 && label != 1) throw ShapeError("weighted_censored_bce: label must be 0 or 1");
  constexpr double kClamp = 1e-12;
  const double pc = std::clamp(p, kClamp, 1.0 - kClamp);
  return label == 1 ? -weights.w1 * std::log(pc) : -weights.w0 * std::log(1.0 - pc);
}

double log_loss(double p, int label) {
  const double y = static_cast<double>(label);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Tensor weighted_bce_with_logits(Graph& graph, const Tensor& logits, std::span<const int> labels,
                                ClassWeights weights) {
  if (logits.size() != labels.size() || labels.empty())
    throw ShapeError("weighted_bce_with_logits: logits/labels size mismatch");
  require_finite_logits(logits.data());
  const double norm = 1.0 / static_cast<double>(labels.size());
  double loss = 0.0;
  auto grad = std::make_shared<std::vector<double>>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = logits[i];
    const double s = 1.0 / (1.0 + std::exp(-z));
    if (labels[i] == 1) {
      loss += norm * weights.w1 * softplus(-z);
      (*grad)[i] = norm * weights.w1 * (s - 1.0);
    } else if (labels[i] == 0) {
      loss += norm * weights.w0 * softplus(z);
      (*grad)[i] = norm * weights.w0 * s;
    } else {
      throw ShapeError("weighted_bce_with_logits: labels must be 0 or 1");
    }
  }
  Tensor z = logits;
  return graph.record(Tensor({1}, {loss}), {logits}, [z, grad](std::span<const double> G) mutable {
    if (!z.requires_grad()) return;
    auto g = z.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[0] * (*grad)[i];
  });
}

namespace {
constexpr double kDiceEps = 1e-8;
}

double soft_dice_loss(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("soft_dice_loss: shape mismatch");
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * truth[i];
    sp += pred[i];
    st += truth[i];
  }
  return 1.0 - 2.0 * inter / (st + sp + kDiceEps);
}

Tensor soft_dice_loss(Graph& graph, const Tensor& pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("soft_dice_loss: shape mismatch");
  const double loss = soft_dice_loss(pred.data(), truth);
  double inter = 0.0, denom = kDiceEps;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    inter += pred[i] * truth[i];
    denom += pred[i] + truth[i];
  }
  auto grad = std::make_shared<std::vector<double>>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    (*grad)[i] = -2.0 * (truth[i] * denom - inter) / (denom * denom);
  Tensor p = pred;
  return graph.record(Tensor({1}, {loss}), {pred}, [p, grad](std::span<const double> G) mutable {
    if (!p.requires_grad()) return;
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[0] * (*grad)[i];
  });
}

int landmark_label(const SurvivalRecord& record, double horizon_months) {
  return record.event && record.time <= horizon_months ? 1 : 0;
}

}  // namespace amoene
