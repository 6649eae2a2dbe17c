#pragma once

// Orchestration: run configuration, datasets, stratified folds, per-fold
// preprocessing, training, reports, grid search and Kaplan-Meier export.

#include <array>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "amoene/fusion.hpp"
#include "amoene/metrics.hpp"
#include "amoene/prep.hpp"
#include "amoene/survival.hpp"
#include "amoene/synth.hpp"
#include "amoene/volume.hpp"

namespace amoene {

enum class Task { grade_classification, binary_2y, mtlr_survival };
enum class FeatureReduction { none, pca, lasso };

std::string to_string(Task t);
Task task_from_string(const std::string& s);
std::string to_string(FeatureReduction r);
FeatureReduction reduction_from_string(const std::string& s);

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
  bool operator==(const GridAxis&) const = default;
};

struct RunConfig {
  Task task = Task::mtlr_survival;
  OutcomeKind outcome = OutcomeKind::OS;
  Scheme scheme = Scheme::pos_vs_neg;
  std::vector<std::string> modalities{"clinical", "primary", "nodal"};
  FusionKind fusion = FusionKind::attention;
  std::size_t latent_dim = 256;
  std::size_t heads = 2;
  double dropout = 0.3;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  double validation_fraction = 0.1;
  bool scaler = true;
  FeatureReduction reduction = FeatureReduction::none;
  std::size_t pca_components = 8;
  double lasso_lambda = 0.05;
  double lasso_l1_ratio = 1.0;
  bool smote_tomek = false;
  std::size_t smote_k = 5;
  double horizon_months = 24.0;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string clinical_csv, features_csv, output_dir;
  std::vector<GridAxis> grid;

  void validate() const;
  // Also checks that the input files exist.
  void validate_paths() const;
  bool operator==(const RunConfig&) const = default;
};

// Flat "key = value" lines; '#' starts a comment; grid axes as
// "grid.<key> = v1, v2, ...".
std::string to_text(const RunConfig& c);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void set_key(RunConfig& c, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& c, const std::string& key);
std::vector<std::string> run_config_keys();

// AMOENE_WORKERS, default 1.
unsigned workers_from_env();

struct Dataset {
  std::vector<std::string> ids;
  std::vector<std::string> modality_names;
  std::vector<Matrix> modalities;
  std::vector<std::vector<std::string>> feature_names;
  std::vector<int> grades;
  std::array<std::vector<SurvivalRecord>, 3> outcomes;  // OS, DM, DFS

  std::size_t size() const { return ids.size(); }
  std::size_t modality_index(const std::string& name) const;
};

// Feature CSV: patient_id, nodal_components, then "<region>.<feature>" columns.
void write_feature_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const std::vector<PatientFeatures>& features);
Dataset load_dataset(const std::filesystem::path& clinical_csv, const std::filesystem::path& features_csv);
Dataset dataset_from_cohort(const Cohort& cohort, const std::vector<PatientFeatures>& features);

// Renders every patient and extracts nodal/primary features.
std::vector<PatientFeatures> cohort_features(const Cohort& cohort, const FeatureOptions& options,
                                             unsigned workers = 1);
// Reads <dir>/clinical.csv and <dir>/volumes/ and writes the feature CSV.
void extract_cohort_features(const std::filesystem::path& dir, const std::filesystem::path& out_csv,
                             const FeatureOptions& options, unsigned workers = 1);

// Target per task: dichotomized grade, 2-year landmark label, or event
// indicator (used for stratification of the survival task).
std::vector<int> task_labels(const RunConfig& c, const Dataset& ds);
const std::vector<SurvivalRecord>& task_records(const RunConfig& c, const Dataset& ds);

struct Fold {
  std::vector<std::size_t> train, test;
};

std::vector<Fold> stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);
// Stratified holdout of round(fraction * class count) members per class.
Fold stratified_holdout(const std::vector<int>& labels, double fraction, std::uint64_t seed);

struct ModalityTransform {
  std::string name;
  Scaler scaler;
  bool use_pca = false;
  Pca pca;
  std::vector<std::size_t> selected;  // lasso; empty = all columns
  std::size_t output_dim = 0;
};

struct FoldTransforms {
  std::vector<ModalityTransform> modalities;
};

nlohmann::json to_json(const FoldTransforms& t);
FoldTransforms transforms_from_json(const nlohmann::json& j);

// Fits scaler, PCA or lasso on the given rows only.
FoldTransforms fit_transforms(const RunConfig& c, const Dataset& ds, const std::vector<std::size_t>& rows);
std::vector<Matrix> apply_transforms(const FoldTransforms& t, const Dataset& ds, const std::vector<std::size_t>& rows);

struct TrainData {
  std::vector<Matrix> inputs;
  std::vector<int> labels;
  std::vector<SurvivalRecord> records;

  std::size_t size() const { return inputs.empty() ? 0 : inputs.front().rows; }
};

struct TrainResult {
  AmoModel model;
  std::vector<double> train_loss, val_loss;  // per epoch
  std::size_t best_epoch = 0;
  BinGrid bins;
  ClassWeights weights;
};

// Mini-batch Adam with seeded shuffles. With a validation set the weights of
// the lowest-validation-loss epoch are kept, otherwise the last epoch's.
TrainResult train(const RunConfig& c, const TrainData& data, const TrainData* validation, std::uint64_t seed);

// Probability for the binary heads, risk score for MTLR.
std::vector<double> predict(AmoModel& model, const std::vector<Matrix>& inputs, Task task);

using Metrics = std::map<std::string, double>;

Metrics evaluate_predictions(std::span<const double> scores, std::span<const int> labels,
                             std::span<const SurvivalRecord> records, Task task);

struct PatientPrediction {
  std::string id;
  std::size_t fold = 0;
  double score = 0.0;
  int label = 0;
  SurvivalRecord record;
};

struct FoldReport {
  Task task = Task::mtlr_survival;
  std::string metric;  // headline key
  std::vector<Metrics> folds;
  Metrics mean, sd;    // SD with n-1
  std::vector<PatientPrediction> predictions;
  std::vector<std::size_t> best_epochs;
};

FoldReport evaluate_report(const std::vector<PatientPrediction>& predictions, Task task);
nlohmann::json to_json(const FoldReport& r);
std::string folds_csv(const FoldReport& r);
std::string predictions_csv(const std::vector<PatientPrediction>& p);
std::vector<PatientPrediction> read_predictions_csv(const std::filesystem::path& path);

struct FoldOutcome {
  FoldTransforms transforms;
  ClassWeights weights;
  std::vector<std::size_t> fit_rows;  // dataset rows the transforms saw
  TrainResult result;
  std::vector<double> scores;  // test rows, fold order
  Metrics metrics;
};

FoldOutcome run_fold(const RunConfig& c, const Dataset& ds, const Fold& fold, std::size_t fold_index);

struct CvResult {
  FoldReport report;
  std::vector<FoldOutcome> folds;
};

CvResult cross_validate(const RunConfig& c, const Dataset& ds, unsigned workers = 1);

struct GridCell {
  std::vector<std::pair<std::string, std::string>> assignment;
  double mean = 0.0, sd = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  RunConfig best_config;
  FoldReport best_report;
};

GridResult grid_search(const RunConfig& base, const std::vector<GridAxis>& axes, const Dataset& ds,
                       unsigned workers = 1);

struct KmStratification {
  double threshold = 0.0;
  KMCurve high, low;
  std::size_t n_high = 0, n_low = 0;
  LogRankResult test;
};

// Splits at the Youden-optimal threshold against the landmark label.
KmStratification km_stratify(std::span<const double> scores, std::span<const SurvivalRecord> records,
                             double horizon_months = 24.0);
std::string km_csv(const KmStratification& km);

// Runs `fn(i)` for i in [0, n) on up to `workers` threads; rethrows the first
// error by index.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

struct TrainArtifacts {
  FoldReport report;
  std::vector<GridCell> grid;
  RunConfig config;  // the evaluated (best) configuration
};

// CV (with grid search when axes are set), then a final model on all rows.
// Writes report.json, folds.csv, predictions.csv, km.csv, model.ckpt and,
// with a grid, grid.csv into output_dir.
TrainArtifacts run_training(const RunConfig& c, unsigned workers = 1);

// Applies a checkpoint's stored transforms to a dataset and scores it.
nlohmann::json evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& ds,
                                   std::vector<PatientPrediction>* predictions = nullptr);

}  // namespace amoene
