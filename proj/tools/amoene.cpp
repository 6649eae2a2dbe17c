// amoene: synthetic cohorts, feature extraction, training and evaluation.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "amoene/pipeline.hpp"

using namespace amoene;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AMO-ENE fusion pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic cohort (clinical.csv, oracle.csv, volumes/)");
  std::string synth_out;
  CohortConfig cohort;
  std::vector<double> censoring;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n", cohort.n_patients, "Number of patients")->capture_default_str();
  synth->add_option("--seed", cohort.seed, "Random seed")->capture_default_str();
  synth->add_option("--gamma", cohort.gamma, "Nodal x primary interaction strength")->capture_default_str();
  synth->add_option("--beta", cohort.beta, "Hazard coefficients over the six generative covariates")
      ->expected(6);
  synth->add_option("--censoring", censoring, "Censoring rate for OS, DM, DFS")->expected(3);
  synth->add_option("--noise", cohort.noise, "CT noise SD (HU)")->capture_default_str();

  // features
  auto* features = app.add_subcommand("features", "Extract nodal and primary features from a cohort directory");
  std::string feat_dir, feat_out;
  FeatureOptions fopt;
  features->add_option("--cohort", feat_dir, "Cohort directory with clinical.csv and volumes/")->required();
  features->add_option("--out", feat_out, "Feature CSV path")->required();
  features->add_option("--rho", fopt.rho, "Volume-gap threshold for node selection")->capture_default_str();
  features->add_option("--bin-width", fopt.bin_width, "Gray-level bin width (HU)")->capture_default_str();
  features->add_option("--connectivity", fopt.connectivity, "Voxel connectivity (6, 18 or 26)")
      ->check(CLI::IsMember({6, 18, 26}))
      ->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Cross-validate, then fit a final model from a config file");
  std::string config_path;
  train_cmd->add_option("config", config_path, "Run config file")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a dataset with a saved checkpoint");
  std::string ckpt, clinical, feats, eval_out, eval_preds;
  eval->add_option("--checkpoint", ckpt, "model.ckpt")->required();
  eval->add_option("--clinical", clinical, "Clinical CSV")->required();
  eval->add_option("--features", feats, "Feature CSV")->required();
  eval->add_option("--out", eval_out, "Report JSON (default stdout)");
  eval->add_option("--predictions", eval_preds, "Per-patient prediction CSV");

  // km-export
  auto* km = app.add_subcommand("km-export", "Kaplan-Meier curves of predictions split at the Youden threshold");
  std::string km_in, km_out;
  double horizon = 24.0;
  km->add_option("--predictions", km_in, "Prediction CSV")->required();
  km->add_option("--out", km_out, "Curve CSV")->required();
  km->add_option("--horizon", horizon, "Landmark horizon (months)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const unsigned workers = workers_from_env();
    if (*synth) {
      if (!censoring.empty()) std::copy(censoring.begin(), censoring.end(), cohort.censoring_rate.begin());
      const auto c = generate_cohort(cohort);
      write_cohort(synth_out, c, workers);
      std::cout << "wrote " << c.patients.size() << " patients to " << synth_out << "\n";
    } else if (*features) {
      extract_cohort_features(feat_dir, feat_out, fopt, workers);
      std::cout << "wrote " << feat_out << "\n";
    } else if (*train_cmd) {
      const auto cfg = load_run_config(config_path);
      const auto art = run_training(cfg, workers);
      const auto& r = art.report;
      std::cout << r.metric << " " << r.mean.at(r.metric) << " +/- " << r.sd.at(r.metric) << " over "
                << r.folds.size() << " folds; artifacts in " << cfg.output_dir << "\n";
    } else if (*eval) {
      const auto ds = load_dataset(clinical, feats);
      std::vector<PatientPrediction> preds;
      const auto report = evaluate_checkpoint(ckpt, ds, &preds);
      if (eval_out.empty()) std::cout << report.dump(2) << "\n";
      else write_file(eval_out, report.dump(2) + "\n");
      if (!eval_preds.empty()) write_file(eval_preds, predictions_csv(preds));
    } else if (*km) {
      const auto preds = read_predictions_csv(km_in);
      std::vector<double> s;
      std::vector<SurvivalRecord> rec;
      for (const auto& p : preds) {
        s.push_back(p.score);
        rec.push_back(p.record);
      }
      const auto strat = km_stratify(s, rec, horizon);
      write_file(km_out, km_csv(strat));
      std::cout << "threshold " << strat.threshold << " high " << strat.n_high << " low " << strat.n_low
                << " log-rank p " << strat.test.p_value << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
