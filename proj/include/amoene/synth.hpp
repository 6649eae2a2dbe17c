#pragma once

// Synthetic head-and-neck cohort: clinical rows, grade labels, CT-like
// volumes with nodal and primary masks, uncertainty maps and censored
// outcomes with a planted log-linear hazard.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "amoene/prep.hpp"
#include "amoene/survival.hpp"
#include "amoene/volume.hpp"

namespace amoene {

// Generative covariates driving both the images and the hazard.
inline const std::vector<std::string> kLatentNames{"age",           "pack_years",       "nodal_log_volume",
                                                   "nodal_roughness", "primary_log_volume", "primary_intensity"};
inline constexpr std::size_t kNodalLatent = 2, kPrimaryLatent = 4;

struct PlantConfig {
  std::vector<double> beta;        // one per feature column (after z-scoring)
  double gamma = 0.0;              // interaction strength
  std::size_t nodal_index = kNodalLatent, primary_index = kPrimaryLatent;
  double censoring_rate = 0.5;     // target fraction censored
  double median_months = 36.0;     // baseline median survival at lp = 0
  std::uint64_t seed = 0;
};

struct PlantedOutcome {
  std::vector<SurvivalRecord> records;
  std::vector<double> linear_predictor;  // Bayes-optimal risk
  std::vector<double> event_times;       // uncensored draws
  std::vector<double> censor_times;
  double censor_max = 0.0;               // C ~ U(0, censor_max)
};

// z-scores the columns, draws T ~ Exp(h0 exp(lp)) with
// lp = beta'z + gamma z_nodal z_primary, then calibrates uniform censoring
// to the requested rate on this sample.
PlantedOutcome plant_survival(const Matrix& features, const PlantConfig& config, OutcomeKind kind = OutcomeKind::OS);

struct CohortConfig {
  std::size_t n_patients = 397;
  std::array<double, 4> grade_proportions{0.694, 0.059, 0.188, 0.059};
  std::array<double, 3> censoring_rate{359.0 / 397.0, 362.0 / 397.0, 329.0 / 397.0};  // OS, DM, DFS
  std::vector<double> beta{0.3, 0.2, 0.8, 0.5, 0.6, 0.0};  // over kLatentNames
  double gamma = 0.0;
  double noise = 10.0;  // CT noise SD in HU
  double median_months = 36.0;
  std::uint64_t seed = 0;
  Dims dims{64, 64, 32};
  Spacing spacing{1.0, 1.0, 2.0};

  void validate() const;
};

struct ClinicalRow {
  double age = 0.0;
  int sex = 0;  // 1 = male
  double pack_years = 0.0;
  int t_stage = 1, n_stage = 0;
  int chemo = 0, chemo_type = 0;  // 0 none, 1 cisplatin, 2 other
};

inline const std::vector<std::string> kClinicalFeatureNames{"age", "sex", "pack_years", "t_stage", "n_stage",
                                                            "chemo", "chemo_type"};
std::vector<double> clinical_features(const ClinicalRow& row);

struct PatientRecord {
  std::string id;
  ClinicalRow clinical;
  int grade = 0;
  std::vector<double> latent;  // kLatentNames order
  std::array<SurvivalRecord, 3> outcomes;  // OS, DM, DFS
  std::array<double, 3> true_risk{};        // planted linear predictor per outcome
  std::size_t n_nodes = 1;
};

struct Cohort {
  CohortConfig config;
  std::vector<PatientRecord> patients;
};

Cohort generate_cohort(const CohortConfig& config);

struct PatientImages {
  Volume ct;
  Mask nodal, primary;
  Volume uncertainty;
  std::vector<Mask> node_masks;  // node 0 is the main node
};

// Deterministic given (config.seed, patient index); volumes are generated on
// demand to keep memory flat. Intensities are rounded to float precision.
PatientImages render_patient(const CohortConfig& config, const PatientRecord& patient, std::size_t index);

// clinical.csv, oracle.csv and volumes/<id>_{ct,nodal,primary,uncertainty}.json
void write_cohort(const std::filesystem::path& dir, const Cohort& cohort, unsigned workers = 1);

std::vector<std::string> clinical_csv_header();

}  // namespace amoene
