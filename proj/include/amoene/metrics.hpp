#pragma once

// Evaluation stack: overlap metrics, ROC-AUC, concordance, Kaplan-Meier,
// log-rank and the bootstrapped simulated reader.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "amoene/survival.hpp"

namespace amoene {

struct SegMetrics {
  double dice = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
};

// Binary volumes (nonzero = foreground). Two empty masks score 1 everywhere.
SegMetrics seg_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

// Mann-Whitney AUC; tied scores count one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Fraction of comparable pairs (T_i > T_j, j uncensored) with r_i < r_j,
// risk ties counting one half.
double c_index(std::span<const double> risks, std::span<const SurvivalRecord> records);

struct KMCurve {
  std::vector<double> times;  // every distinct observed time, increasing
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;

  // Right-continuous step function; 1 before the first time.
  double survival_at(double t) const;
};

KMCurve km_fit(std::span<const SurvivalRecord> records);

struct LogRankResult {
  double chi_square = 0.0;
  double p_value = 1.0;
  double observed_a = 0.0;
  double expected_a = 0.0;
  double variance = 0.0;
};

LogRankResult logrank(std::span<const SurvivalRecord> group_a, std::span<const SurvivalRecord> group_b);

// Upper tail of the chi-square distribution with one degree of freedom.
double chi2_1_sf(double x);

// Log-rank between the positive and negative groups of a binary predictor.
LogRankResult logrank_split(std::span<const int> predicted, std::span<const SurvivalRecord> records);

using RaterAnnotations = std::array<std::uint8_t, 3>;

struct ReaderSummary {
  double mean_p = 1.0;
  double median_p = 1.0;
  double q025 = 1.0;
  double q975 = 1.0;
  std::vector<double> p_values;
};

// Each round draws one of three raters per patient and runs a log-rank test
// between the resulting positive and negative groups. Round r draws from
// derive_seed(seed, r); a round with an empty group contributes p = 1.
ReaderSummary simulated_reader(std::span<const RaterAnnotations> annotations,
                               std::span<const SurvivalRecord> records, std::size_t n_boot, std::uint64_t seed);

// Linear-interpolated empirical quantile, q in [0,1].
double quantile(std::vector<double> values, double q);

// Threshold maximizing TPR - FPR among observed scores (positive = score >= t).
double youden_threshold(std::span<const double> scores, std::span<const int> labels);

struct BinaryRates {
  double recall = 0.0;
  double specificity = 0.0;
};

BinaryRates binary_rates(std::span<const double> scores, std::span<const int> labels, double threshold);

}  // namespace amoene
