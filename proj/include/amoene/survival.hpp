#pragma once

// Survival objectives: MTLR discrete-time likelihood on quantile bins, the
// class-weighted 2-year landmark BCE, the soft Dice loss, and conversion of
// per-bin logits into survival curves and scalar risks.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amoene/tensor.hpp"

namespace amoene {

enum class OutcomeKind { OS, DM, DFS };

std::string to_string(OutcomeKind kind);
OutcomeKind outcome_from_string(const std::string& name);

struct SurvivalRecord {
  double time = 1.0;  // months
  bool event = false;
  OutcomeKind kind = OutcomeKind::OS;
};

void validate(const SurvivalRecord& record);

// T bins from T-1 strictly increasing interior boundaries; bin j covers
// [b_{j-1}, b_j) and the last bin is open-ended.
struct BinGrid {
  std::vector<double> boundaries;

  std::size_t bins() const { return boundaries.size() + 1; }
  std::size_t bin_of(double time) const;
};

BinGrid make_bins(std::span<const double> times);

struct MTLRTarget {
  std::vector<std::uint8_t> y;
  bool censored = false;
};

MTLRTarget encode_mtlr_target(const SurvivalRecord& record, const BinGrid& grid);

enum class Reduction { mean, sum };

// Loss and dL/dZ for logits [n, T] (row-major).
struct LossWithGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

LossWithGrad mtlr_nll_with_grad(std::span<const double> logits, std::size_t bins,
                                std::span<const MTLRTarget> targets, Reduction reduction = Reduction::mean);
double mtlr_nll(std::span<const double> logits, std::size_t bins, std::span<const MTLRTarget> targets,
                Reduction reduction = Reduction::mean);
// Graph node variant; logits is [n, T].
Tensor mtlr_nll(Graph& graph, const Tensor& logits, std::span<const MTLRTarget> targets,
                Reduction reduction = Reduction::mean);

// S_j = sum_{t > j} softmax(z)_t for j = 0..T-1; S_{T-1} = 0.
std::vector<double> survival_curve(std::span<const double> logits);
// Negative area under the discrete survival curve; larger means earlier events.
double risk_score(std::span<const double> logits);

struct ClassWeights {
  double w0 = 1.0;
  double w1 = 1.0;
};

ClassWeights class_weights(std::span<const int> labels);

// -[y w1 ln p + (1-y) w0 ln(1-p)], p clamped to [1e-12, 1-1e-12].
double weighted_censored_bce(double p, int label, ClassWeights weights = {});
// Plain log loss.
double log_loss(double p, int label);
// Graph node on pre-sigmoid logits [n] or [n,1]; mean over the batch.
Tensor weighted_bce_with_logits(Graph& graph, const Tensor& logits, std::span<const int> labels,
                                ClassWeights weights);

// 1 - 2 sum(y*p) / (sum(y) + sum(p) + eps), eps = 1e-8.
double soft_dice_loss(std::span<const double> pred, std::span<const double> truth);
Tensor soft_dice_loss(Graph& graph, const Tensor& pred, std::span<const double> truth);

// 1 if an uncensored event occurs at or before horizon (months), else 0.
int landmark_label(const SurvivalRecord& record, double horizon_months = 24.0);

}  // namespace amoene
