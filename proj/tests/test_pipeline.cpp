#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "amoene/pipeline.hpp"
#include "amoene/random.hpp"
#include "doctest.h"

using namespace amoene;
namespace fs = std::filesystem;

namespace {

// Gaussian modalities; the outcome hazard and grade depend on a few columns.
Dataset toy_dataset(std::size_t n, std::uint64_t seed, double signal = 1.5) {
  Rng rng(seed);
  Dataset ds;
  ds.modality_names = {"clinical", "primary", "nodal"};
  const std::size_t dims[3] = {3, 4, 4};
  for (int k = 0; k < 3; ++k) {
    Matrix m(n, dims[k]);
    for (auto& v : m.data) v = standard_normal(rng);
    ds.modalities.push_back(m);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < dims[k]; ++j) names.push_back("f" + std::to_string(j));
    ds.feature_names.push_back(names);
  }
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "T%03zu", i);
    ds.ids.push_back(id);
    const double lp = signal * (ds.modalities[0](i, 0) + ds.modalities[1](i, 1) - ds.modalities[2](i, 2));
    ds.grades.push_back(lp + 0.5 * standard_normal(rng) > 0.3 ? 1 + static_cast<int>(uniform_index(rng, 3)) : 0);
    for (int k = 0; k < 3; ++k) {
      const double t = -std::log(uniform01(rng) + 1e-300) / (std::log(2.0) / 30.0 * std::exp(lp));
      const double cens = uniform(rng, 0.0, 150.0);
      ds.outcomes[k].push_back({std::max(0.1, std::min(t, cens)), t <= cens, static_cast<OutcomeKind>(k)});
    }
  }
  return ds;
}

RunConfig small_config(Task task) {
  RunConfig c;
  c.task = task;
  c.latent_dim = 8;
  c.heads = 2;
  c.dropout = 0.1;
  c.lr = 0.01;
  c.epochs = 15;
  c.batch_size = 16;
  c.folds = 3;
  c.seed = 3;
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run config round trip") {
  RunConfig c;
  CHECK(parse_run_config(to_text(c)) == c);

  c.task = Task::grade_classification;
  c.outcome = OutcomeKind::DFS;
  c.scheme = Scheme::grade3;
  c.modalities = {"nodal", "clinical"};
  c.fusion = FusionKind::early;
  c.dropout = 0.1 + 0.2;  // not exactly representable as a short decimal
  c.lr = 1.0 / 3.0;
  c.validation_fraction = 0.0;
  c.scaler = false;
  c.reduction = FeatureReduction::lasso;
  c.lasso_lambda = 1e-7;
  c.smote_tomek = true;
  c.seed = 18446744073709551615ull;
  c.clinical_csv = "/data/clinical.csv";
  c.grid = {{"lr", {"0.01", "0.001", "0.007"}}, {"batch_size", {"8", "16", "32"}}};
  const auto text = to_text(c);
  CHECK(parse_run_config(text) == c);
  CHECK(to_text(parse_run_config(text)) == text);

  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    RunConfig r;
    r.dropout = uniform(rng, 0.0, 0.9);
    r.lr = std::exp(uniform(rng, -12.0, 0.0));
    r.horizon_months = uniform(rng, 1.0, 100.0);
    r.lasso_l1_ratio = uniform01(rng);
    r.heads = 1 + uniform_index(rng, 4);
    r.latent_dim = r.heads * (1 + uniform_index(rng, 20));
    r.seed = rng();
    CHECK(parse_run_config(to_text(r)) == r);
  }

  CHECK(parse_run_config("# comment\n\n  folds = 7 \nseed=9\n").folds == 7);
  CHECK_THROWS_AS(parse_run_config("no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("folds = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("folds = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("folds = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("dropout = nan\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("latent_dim = 10\nheads = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("modalities = clinical,clinical\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("task = survival\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("grid.lr = 0.1, x\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("grid.nope = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("just text\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), ConfigError);

  RunConfig p;
  p.clinical_csv = "/nonexistent/clinical.csv";
  CHECK_THROWS_AS(p.validate_paths(), ConfigError);
}

TEST_CASE("worker count from the environment") {
  ::unsetenv("AMOENE_WORKERS");
  CHECK(workers_from_env() == 1);
  ::setenv("AMOENE_WORKERS", "3", 1);
  CHECK(workers_from_env() == 3);
  ::setenv("AMOENE_WORKERS", "0", 1);
  CHECK_THROWS_AS(workers_from_env(), ConfigError);
  ::setenv("AMOENE_WORKERS", "many", 1);
  CHECK_THROWS_AS(workers_from_env(), ConfigError);
  ::unsetenv("AMOENE_WORKERS");
}

TEST_CASE("stratified_kfold examples") {
  std::vector<int> ten{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  auto folds = stratified_kfold(ten, 5, 1);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    REQUIRE(f.test.size() == 2);
    CHECK(ten[f.test[0]] + ten[f.test[1]] == 1);
  }

  // grade marginals of 397 patients: 276 / 23 / 75 / 23
  std::vector<int> grades;
  for (auto [g, count] : std::vector<std::pair<int, int>>{{0, 276}, {1, 23}, {2, 75}, {3, 23}})
    grades.insert(grades.end(), count, g);
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    for (const auto& f : stratified_kfold(grades, 5, seed)) {
      const auto g3 = std::count_if(f.test.begin(), f.test.end(), [&](std::size_t i) { return grades[i] == 3; });
      CHECK((g3 == 4 || g3 == 5));
    }

  CHECK_THROWS_AS(stratified_kfold(std::vector<int>{0, 0, 0, 1, 1}, 3, 0), ConfigError);
  CHECK_THROWS_AS(stratified_kfold(ten, 1, 0), ConfigError);
}

TEST_CASE("stratified_kfold properties") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 5);
    const std::size_t classes = 1 + uniform_index(rng, 4);
    std::vector<int> y;
    for (std::size_t c = 0; c < classes; ++c) y.insert(y.end(), k + uniform_index(rng, 30), static_cast<int>(c));
    shuffle(y.begin(), y.end(), rng);
    const auto seed = rng();
    auto folds = stratified_kfold(y, k, seed);
    std::vector<int> seen(y.size(), 0);
    for (const auto& f : folds) {
      for (auto i : f.test) ++seen[i];
      CHECK(f.train.size() + f.test.size() == y.size());
      std::set<std::size_t> tr(f.train.begin(), f.train.end());
      for (auto i : f.test) CHECK(tr.count(i) == 0);
      for (std::size_t c = 0; c < classes; ++c) {
        const double total = static_cast<double>(std::count(y.begin(), y.end(), static_cast<int>(c)));
        const double in_fold = static_cast<double>(
            std::count_if(f.test.begin(), f.test.end(), [&](std::size_t i) { return y[i] == static_cast<int>(c); }));
        CHECK(std::abs(in_fold - total / static_cast<double>(k)) <= 1.0);
      }
    }
    for (int s : seen) CHECK(s == 1);
    auto again = stratified_kfold(y, k, seed);
    for (std::size_t f = 0; f < k; ++f) CHECK(again[f].test == folds[f].test);
  }
}

TEST_CASE("stratified_holdout") {
  std::vector<int> y(100, 0);
  for (int i = 0; i < 30; ++i) y[i] = 1;
  auto h = stratified_holdout(y, 0.1, 5);
  CHECK(h.test.size() == 10);
  CHECK(std::count_if(h.test.begin(), h.test.end(), [&](std::size_t i) { return y[i] == 1; }) == 3);
  CHECK(h.train.size() == 90);
  CHECK(stratified_holdout(y, 0.0, 5).test.empty());
}

TEST_CASE("feature CSV and dataset loading") {
  CohortConfig cc;
  cc.n_patients = 6;
  cc.seed = 21;
  auto co = generate_cohort(cc);
  auto feats = cohort_features(co, {});
  auto mem = dataset_from_cohort(co, feats);
  const auto dir = temp_dir("amoene_pipeline_csv");
  write_cohort(dir, co);
  extract_cohort_features(dir, dir / "features.csv", {});
  auto disk = load_dataset(dir / "clinical.csv", dir / "features.csv");
  CHECK(disk.ids == mem.ids);
  CHECK(disk.modality_names == mem.modality_names);
  CHECK(disk.feature_names == mem.feature_names);
  CHECK(disk.grades == mem.grades);
  for (std::size_t k = 0; k < disk.modalities.size(); ++k) {
    // disk volumes are float-rounded, which the in-memory render already is
    CHECK(disk.modalities[k].data == mem.modalities[k].data);
  }
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < disk.size(); ++i) {
      CHECK(disk.outcomes[k][i].time == mem.outcomes[k][i].time);
      CHECK(disk.outcomes[k][i].event == mem.outcomes[k][i].event);
    }
  CHECK(mem.modality_index("nodal") == 2);
  CHECK_THROWS_AS(mem.modality_index("genomic"), ConfigError);

  std::ofstream(dir / "short.csv") << "patient_id,nodal.components\nP0000,1\n";
  CHECK_THROWS_AS(load_dataset(dir / "clinical.csv", dir / "short.csv"), ConfigError);
  CHECK_THROWS_AS(load_dataset(dir / "missing.csv", dir / "features.csv"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("train: zero learning rate is a no-op") {
  auto ds = toy_dataset(40, 1);
  auto c = small_config(Task::binary_2y);
  c.lr = 0.0;
  c.dropout = 0.0;
  c.batch_size = 64;
  c.epochs = 5;
  std::vector<std::size_t> rows(40);
  std::iota(rows.begin(), rows.end(), 0);
  auto t = fit_transforms(c, ds, rows);
  TrainData td;
  td.inputs = apply_transforms(t, ds, rows);
  td.labels = task_labels(c, ds);
  auto res = train(c, td, nullptr, 9);
  // the freshly initialised model train() starts from
  ModelConfig mc;
  mc.modalities = c.modalities;
  for (const auto& m : td.inputs) mc.input_dims.push_back(m.cols);
  mc.latent_dim = c.latent_dim;
  mc.heads = c.heads;
  mc.dropout = c.dropout;
  mc.seed = derive_seed(9, 0);
  AmoModel init(mc);
  auto a = res.model.named_parameters(), b = init.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
  }
  for (double l : res.train_loss) CHECK(l == res.train_loss.front());
}

TEST_CASE("train: separable data is fit") {
  Rng rng(2);
  Dataset ds;
  ds.modality_names = {"clinical", "primary", "nodal"};
  const std::size_t n = 60;
  for (int k = 0; k < 3; ++k) {
    Matrix m(n, 2);
    for (auto& v : m.data) v = standard_normal(rng);
    ds.modalities.push_back(m);
    ds.feature_names.push_back({"a", "b"});
  }
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    y.push_back(ds.modalities[1](i, 0) > 0 ? 1 : 0);
    ds.modalities[1](i, 0) += y.back() ? 1.0 : -1.0;  // margin
  }
  auto c = small_config(Task::binary_2y);
  c.dropout = 0.0;
  c.epochs = 200;
  c.lr = 0.01;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  TrainData td;
  td.inputs = apply_transforms(fit_transforms(c, ds, rows), ds, rows);
  td.labels = y;
  auto res = train(c, td, nullptr, 4);
  CHECK(res.train_loss.size() == 200);
  CHECK(res.train_loss.back() < 0.05);
  MESSAGE("final training loss ", res.train_loss.back());

  auto again = train(c, td, nullptr, 4);
  CHECK(again.train_loss == res.train_loss);

  auto wild = c;
  wild.lr = 1e300;
  CHECK_THROWS_AS(train(wild, td, nullptr, 4), NumericError);
  TrainData one = td;
  for (auto& m : one.labels) m = 1;
  CHECK_THROWS_AS(train(c, one, nullptr, 4), ShapeError);
}

TEST_CASE("train keeps the best validation epoch") {
  auto ds = toy_dataset(80, 3);
  auto c = small_config(Task::mtlr_survival);
  c.epochs = 30;
  auto o = run_fold(c, ds, Fold{[] {
                                  std::vector<std::size_t> r(60);
                                  std::iota(r.begin(), r.end(), 0);
                                  return r;
                                }(),
                                {60, 61, 62, 63, 64, 65, 66, 67, 68, 69, 70, 71, 72, 73, 74, 75, 76, 77, 78, 79}},
                    0);
  const auto& v = o.result.val_loss;
  REQUIRE(v.size() == 30);
  CHECK(*std::min_element(v.begin(), v.end()) == v[o.result.best_epoch]);
  CHECK(o.scores.size() == 20);
  CHECK(o.metrics.count("c_index") == 1);
}

TEST_CASE("evaluate_report") {
  std::vector<PatientPrediction> p;
  for (std::size_t f = 0; f < 3; ++f)
    for (int i = 0; i < 6; ++i) {
      const int label = i % 2;
      p.push_back({"x", f, label ? 0.9 - 0.01 * i : 0.1 + 0.01 * i, label, {10.0 + i, true}});
    }
  auto rep = evaluate_report(p, Task::binary_2y);
  CHECK(rep.mean.at("auc") == 1.0);
  CHECK(rep.sd.at("auc") == 0.0);
  CHECK(rep.metric == "auc");

  // risk decreasing with time is perfectly concordant
  std::vector<PatientPrediction> s;
  for (std::size_t f = 0; f < 2; ++f)
    for (int i = 0; i < 5; ++i) s.push_back({"y", f, -1.0 * i, 1, {1.0 + i, true}});
  CHECK(evaluate_report(s, Task::mtlr_survival).mean.at("c_index") == 1.0);

  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    std::vector<PatientPrediction> r;
    for (std::size_t f = 0; f < 5; ++f)
      for (int i = 0; i < 12; ++i) r.push_back({"z", f, uniform01(rng), i % 3 == 0, {uniform(rng, 1, 50), bernoulli(rng, 0.6)}});
    for (Task task : {Task::binary_2y, Task::mtlr_survival}) {
      auto rep2 = evaluate_report(r, task);
      for (const auto& [key, mean] : rep2.mean) {
        double sum = 0;
        for (const auto& f : rep2.folds) sum += f.at(key);
        const double m = sum / 5.0;
        double ss = 0;
        for (const auto& f : rep2.folds) ss += (f.at(key) - m) * (f.at(key) - m);
        CHECK(std::abs(mean - m) < 1e-12);
        CHECK(std::abs(rep2.sd.at(key) - std::sqrt(ss / 4.0)) < 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(evaluate_predictions(std::vector<double>{0.1, 0.2}, std::vector<int>{1}, {}, Task::binary_2y),
                  ShapeError);
  CHECK_THROWS_AS(evaluate_report({}, Task::binary_2y), ShapeError);
}

TEST_CASE("cross validation is deterministic and leak-free") {
  auto ds = toy_dataset(90, 7);
  auto c = small_config(Task::binary_2y);
  c.reduction = FeatureReduction::pca;
  c.pca_components = 2;
  auto a = cross_validate(c, ds);
  auto b = cross_validate(c, ds, 3);
  CHECK(to_json(a.report).dump() == to_json(b.report).dump());
  CHECK(a.report.predictions.size() == 90);

  const auto folds = stratified_kfold(task_labels(c, ds), c.folds, c.seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    // class weights match the rows the fold trained on
    std::vector<int> y;
    const auto labels = task_labels(c, ds);
    for (auto r : a.folds[f].fit_rows) y.push_back(labels[r]);
    const auto w = class_weights(y);
    CHECK(a.folds[f].weights.w0 == w.w0);
    CHECK(a.folds[f].weights.w1 == w.w1);
    for (auto r : a.folds[f].fit_rows) CHECK(!std::binary_search(folds[f].test.begin(), folds[f].test.end(), r));

    // perturb every test row of this fold; the fold's transforms stay put
    Dataset mutated = ds;
    for (auto& m : mutated.modalities)
      for (auto r : folds[f].test)
        for (std::size_t j = 0; j < m.cols; ++j) m(r, j) = 1e3 * (j + 1);
    const auto before = to_json(fit_transforms(c, ds, a.folds[f].fit_rows)).dump();
    const auto after = to_json(fit_transforms(c, mutated, a.folds[f].fit_rows)).dump();
    CHECK(before == after);
    CHECK(before == to_json(a.folds[f].transforms).dump());
  }
}

TEST_CASE("preprocessing choices") {
  auto ds = toy_dataset(60, 8);
  std::vector<std::size_t> rows(60);
  std::iota(rows.begin(), rows.end(), 0);
  auto c = small_config(Task::binary_2y);
  c.reduction = FeatureReduction::lasso;
  c.lasso_lambda = 10.0;  // kills every coefficient
  auto t = fit_transforms(c, ds, rows);
  for (const auto& m : t.modalities) CHECK(m.selected.size() == 1);
  // the fallback keeps the planted column of the primary modality
  CHECK(t.modalities[1].selected[0] == 1);
  c.lasso_lambda = 0.01;
  t = fit_transforms(c, ds, rows);
  auto x = apply_transforms(t, ds, rows);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(x[k].cols == t.modalities[k].output_dim);
  auto round = transforms_from_json(to_json(t));
  CHECK(to_json(round).dump() == to_json(t).dump());

  c.task = Task::grade_classification;
  c.smote_tomek = true;
  c.reduction = FeatureReduction::none;
  c.epochs = 3;
  auto folds = stratified_kfold(task_labels(c, ds), 3, 1);
  auto o = run_fold(c, ds, folds[0], 0);
  CHECK(o.scores.size() == folds[0].test.size());

  Dataset wrong = ds;
  wrong.modalities[0] = wrong.modalities[0].select_cols(std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(apply_transforms(t, wrong, rows), ShapeError);
}

TEST_CASE("grid search") {
  auto ds = toy_dataset(90, 11);
  auto c = small_config(Task::binary_2y);
  c.epochs = 10;
  CHECK_THROWS_AS(grid_search(c, {}, ds), ConfigError);
  CHECK_THROWS_AS(grid_search(c, {{"lr", {}}}, ds), ConfigError);

  auto single = grid_search(c, {{"lr", {"0.01"}}}, ds);
  REQUIRE(single.cells.size() == 1);
  CHECK(single.cells[0].mean == cross_validate(c, ds).report.mean.at("auc"));

  std::vector<GridAxis> axes{{"lr", {"0.02", "0.0001"}}, {"batch_size", {"8", "32"}}};
  auto g = grid_search(c, axes, ds, 2);
  REQUIRE(g.cells.size() == 4);
  CHECK(g.cells[1].assignment == std::vector<std::pair<std::string, std::string>>{{"lr", "0.02"}, {"batch_size", "32"}});
  std::size_t best = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    RunConfig rc = c;
    for (const auto& [k, v] : g.cells[i].assignment) set_key(rc, k, v);
    const double m = cross_validate(rc, ds).report.mean.at("auc");
    CHECK(m == g.cells[i].mean);
    if (m > g.cells[best].mean) best = i;
  }
  CHECK(g.best == best);
  CHECK(g.best_config.lr == std::stod(g.cells[best].assignment[0].second));

  // a zero learning rate is dominated; adding it leaves the winner alone
  auto with_dominated = grid_search(c, {{"lr", {"0.02", "0.0001", "0"}}, {"batch_size", {"8", "32"}}}, ds);
  CHECK(with_dominated.best_config == g.best_config);
}

TEST_CASE("km stratification") {
  std::vector<SurvivalRecord> rec;
  std::vector<double> score;
  for (int i = 0; i < 20; ++i) {
    const bool early = i < 10;
    rec.push_back({early ? 5.0 + i : 40.0 + i, true});
    score.push_back(early ? 0.9 : 0.1);
  }
  auto km = km_stratify(score, rec);
  CHECK(km.threshold == 0.9);
  CHECK(km.n_high == 10);
  CHECK(km.n_low == 10);
  CHECK(km.test.p_value < 1e-3);
  const auto csv = km_csv(km);
  CHECK(csv.rfind("group,time,survival,at_risk,events\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);
  CHECK_THROWS_AS(km_stratify(std::vector<double>(20, 0.5), rec), ShapeError);
  CHECK_THROWS_AS(km_stratify(std::vector<double>{0.1}, rec), ShapeError);
}

TEST_CASE("run_training writes reproducible artifacts") {
  const auto dir = temp_dir("amoene_pipeline_run");
  CohortConfig cc;
  cc.n_patients = 40;
  cc.seed = 5;
  cc.censoring_rate = {0.4, 0.4, 0.4};
  auto co = generate_cohort(cc);
  write_cohort(dir / "cohort", co);
  extract_cohort_features(dir / "cohort", dir / "features.csv", {});

  auto c = small_config(Task::mtlr_survival);
  c.clinical_csv = (dir / "cohort" / "clinical.csv").string();
  c.features_csv = (dir / "features.csv").string();
  c.output_dir = (dir / "run1").string();
  c.grid = {{"lr", {"0.01", "0.003"}}};
  auto art = run_training(c);
  for (auto f : {"report.json", "folds.csv", "predictions.csv", "km.csv", "model.ckpt", "grid.csv"})
    CHECK(fs::exists(dir / "run1" / f));
  CHECK(art.grid.size() == 2);

  std::map<std::string, std::string> first;
  const auto files = {"report.json", "folds.csv", "predictions.csv", "km.csv", "model.ckpt", "grid.csv"};
  for (auto f : files) first[f] = slurp(dir / "run1" / f);
  run_training(c);
  for (auto f : files) CHECK(slurp(dir / "run1" / f) == first[f]);

  auto preds = read_predictions_csv(dir / "run1" / "predictions.csv");
  REQUIRE(preds.size() == 40);
  for (std::size_t i = 0; i < preds.size(); ++i) CHECK(preds[i].score == art.report.predictions[i].score);

  auto ds = load_dataset(c.clinical_csv, c.features_csv);
  std::vector<PatientPrediction> scored;
  auto eval = evaluate_checkpoint(dir / "run1" / "model.ckpt", ds, &scored);
  CHECK(eval["metrics"].contains("c_index"));
  CHECK(scored.size() == 40);

  auto missing = c;
  missing.features_csv = (dir / "nope.csv").string();
  CHECK_THROWS_AS(run_training(missing), ConfigError);
  fs::remove_all(dir);
}
