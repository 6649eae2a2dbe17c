#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "amoene/pipeline.hpp"
#include "amoene/random.hpp"

namespace amoene {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<Tensor> gather(const std::vector<Matrix>& inputs, std::span<const std::size_t> rows) {
  std::vector<Tensor> out;
  for (const auto& m : inputs) {
    std::vector<double> data;
    data.reserve(rows.size() * m.cols);
    for (auto r : rows) data.insert(data.end(), m.row(r).begin(), m.row(r).end());
    out.push_back(Tensor::matrix(rows.size(), m.cols, std::move(data)));
  }
  return out;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

// Batch boundaries; a trailing single row joins the previous batch so
// batchnorm never sees a batch of one.
std::vector<std::pair<std::size_t, std::size_t>> batches(std::size_t n, std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += size) out.push_back({b, std::min(n, b + size)});
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

}  // namespace

TrainResult train(const RunConfig& c, const TrainData& data, const TrainData* validation, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 2) throw ShapeError("train: need at least two training rows");
  if (data.inputs.size() != c.modalities.size()) throw ShapeError("train: modality count mismatch");
  const bool survival = c.task == Task::mtlr_survival;

  ModelConfig mc;
  mc.modalities = c.modalities;
  for (const auto& m : data.inputs) mc.input_dims.push_back(m.cols);
  mc.latent_dim = c.latent_dim;
  mc.heads = c.heads;
  mc.dropout = c.dropout;
  mc.fusion = c.fusion;
  mc.seed = derive_seed(seed, 0);

  BinGrid grid;
  std::vector<MTLRTarget> targets, val_targets;
  ClassWeights weights;
  if (survival) {
    if (data.records.size() != n) throw ShapeError("train: records do not match rows");
    std::vector<double> times;
    for (const auto& r : data.records)
      if (r.event) times.push_back(r.time);
    if (times.size() < 4) {
      times.clear();
      for (const auto& r : data.records) times.push_back(r.time);
    }
    grid = make_bins(times);
    for (const auto& r : data.records) targets.push_back(encode_mtlr_target(r, grid));
    if (validation)
      for (const auto& r : validation->records) val_targets.push_back(encode_mtlr_target(r, grid));
    mc.head = HeadKind::mtlr;
    mc.bins = grid.bins();
  } else {
    if (data.labels.size() != n) throw ShapeError("train: labels do not match rows");
    weights = class_weights(data.labels);
    mc.head = HeadKind::binary;
  }

  TrainResult res{AmoModel(mc), {}, {}, 0, grid, weights};
  auto& model = res.model;
  auto params = model.parameters();
  AdamState adam;
  adam.lr = c.lr;

  auto loss_of = [&](Graph& g, const Tensor& pred, std::span<const std::size_t> rows, bool val) {
    if (survival) {
      std::vector<MTLRTarget> t;
      for (auto r : rows) t.push_back(val ? val_targets[r] : targets[r]);
      return mtlr_nll(g, pred, t);
    }
    std::vector<int> y;
    for (auto r : rows) y.push_back(val ? validation->labels[r] : data.labels[r]);
    return weighted_bce_with_logits(g, pred, y, weights);
  };

  const bool use_val = validation && validation->size() > 0;
  std::optional<AmoModel> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = iota_rows(n);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    Rng rng(derive_seed(seed, 1, epoch));
    shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (auto [b0, b1] : batches(n, c.batch_size)) {
      // sorted so a batch's result does not depend on its internal order
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(b0), order.begin() + static_cast<std::ptrdiff_t>(b1));
      std::span<const std::size_t> rows(order.data() + b0, b1 - b0);
      for (auto& p : params) p.zero_grad();
      Graph g;
      const auto inputs = gather(data.inputs, rows);
      auto out = model.forward(g, inputs, Mode::train, derive_seed(seed, 2, step++));
      Tensor loss;
      try {
        loss = loss_of(g, out.prediction, rows, false);
      } catch (const NumericError& e) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (!std::isfinite(loss.item()))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + " (lr " + fmt(c.lr) + ")");
      g.backward(loss);
      adam_step(params, adam);
      total += loss.item() * static_cast<double>(rows.size());
    }
    res.train_loss.push_back(total / static_cast<double>(n));
    if (use_val) {
      Graph g;
      const auto vrows = iota_rows(validation->size());
      auto out = model.forward(g, gather(validation->inputs, vrows), Mode::eval);
      const double v = loss_of(g, out.prediction, vrows, true).item();
      if (!std::isfinite(v)) throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
      res.val_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        res.best_epoch = epoch;
        best = model.clone();
      }
    } else {
      res.best_epoch = epoch;
    }
  }
  if (best) res.model = std::move(*best);
  return res;
}

std::vector<double> predict(AmoModel& model, const std::vector<Matrix>& inputs, Task task) {
  if (inputs.empty() || inputs.front().rows == 0) return {};
  Graph g;
  auto out = model.forward(g, gather(inputs, iota_rows(inputs.front().rows)), Mode::eval);
  const auto& pred = out.prediction;
  std::vector<double> scores;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    if (task == Task::mtlr_survival) {
      scores.push_back(risk_score(pred.data().subspan(i * pred.cols(), pred.cols())));
    } else {
      scores.push_back(1.0 / (1.0 + std::exp(-pred.data()[i])));
    }
    if (!std::isfinite(scores.back())) throw NumericError("predict: non-finite score");
  }
  return scores;
}

Metrics evaluate_predictions(std::span<const double> scores, std::span<const int> labels,
                             std::span<const SurvivalRecord> records, Task task) {
  Metrics m;
  if (task == Task::mtlr_survival) {
    if (scores.size() != records.size()) throw ShapeError("evaluate: predictions and records are misaligned");
    m["c_index"] = c_index(scores, records);
  } else {
    if (scores.size() != labels.size()) throw ShapeError("evaluate: predictions and labels are misaligned");
    m["auc"] = roc_auc(scores, labels);
    const auto r = binary_rates(scores, labels, 0.5);
    m["recall"] = r.recall;
    m["specificity"] = r.specificity;
  }
  return m;
}

FoldReport evaluate_report(const std::vector<PatientPrediction>& predictions, Task task) {
  FoldReport rep;
  rep.task = task;
  rep.metric = task == Task::mtlr_survival ? "c_index" : "auc";
  rep.predictions = predictions;
  std::size_t folds = 0;
  for (const auto& p : predictions) folds = std::max(folds, p.fold + 1);
  if (folds == 0) throw ShapeError("evaluate_report: no predictions");
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<double> s;
    std::vector<int> y;
    std::vector<SurvivalRecord> r;
    for (const auto& p : predictions)
      if (p.fold == f) {
        s.push_back(p.score);
        y.push_back(p.label);
        r.push_back(p.record);
      }
    if (s.empty()) throw ShapeError("evaluate_report: fold " + std::to_string(f) + " has no predictions");
    rep.folds.push_back(evaluate_predictions(s, y, r, task));
  }
  for (const auto& [key, unused] : rep.folds.front()) {
    double sum = 0.0;
    for (const auto& f : rep.folds) sum += f.at(key);
    const double mean = sum / static_cast<double>(folds);
    double ss = 0.0;
    for (const auto& f : rep.folds) ss += (f.at(key) - mean) * (f.at(key) - mean);
    rep.mean[key] = mean;
    rep.sd[key] = folds > 1 ? std::sqrt(ss / static_cast<double>(folds - 1)) : 0.0;
  }
  return rep;
}

nlohmann::json to_json(const FoldReport& r) {
  nlohmann::json j;
  j["task"] = to_string(r.task);
  j["metric"] = r.metric;
  j["folds"] = r.folds;
  j["mean"] = r.mean;
  j["sd"] = r.sd;
  j["best_epochs"] = r.best_epochs;
  auto preds = nlohmann::json::array();
  for (const auto& p : r.predictions)
    preds.push_back({{"patient_id", p.id}, {"fold", p.fold}, {"score", p.score}, {"label", p.label},
                     {"time", p.record.time}, {"event", p.record.event}});
  j["predictions"] = preds;
  return j;
}

std::string folds_csv(const FoldReport& r) {
  std::ostringstream out;
  out << "fold";
  for (const auto& [key, unused] : r.mean) out << "," << key;
  out << "\n";
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    out << f;
    for (const auto& [key, unused] : r.mean) out << "," << fmt(r.folds[f].at(key));
    out << "\n";
  }
  for (const auto& [name, row] : {std::pair{"mean", &r.mean}, std::pair{"sd", &r.sd}}) {
    out << name;
    for (const auto& [key, v] : *row) out << "," << fmt(v);
    out << "\n";
  }
  return out.str();
}

std::string predictions_csv(const std::vector<PatientPrediction>& preds) {
  std::ostringstream out;
  out << "patient_id,fold,score,label,time,event\n";
  for (const auto& p : preds)
    out << p.id << "," << p.fold << "," << fmt(p.score) << "," << p.label << "," << fmt(p.record.time) << ","
        << (p.record.event ? 1 : 0) << "\n";
  return out.str();
}

std::vector<PatientPrediction> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("patient_id,fold,score,label,time,event", 0) != 0)
    throw ConfigError(path.string() + ": unexpected header");
  std::vector<PatientPrediction> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    auto num = [&](const std::string& s) {
      double v = 0.0;
      auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + s + "'");
      return v;
    };
    PatientPrediction p;
    p.id = cells[0];
    p.fold = static_cast<std::size_t>(num(cells[1]));
    p.score = num(cells[2]);
    p.label = static_cast<int>(num(cells[3]));
    p.record.time = num(cells[4]);
    p.record.event = num(cells[5]) != 0.0;
    out.push_back(p);
  }
  return out;
}

FoldOutcome run_fold(const RunConfig& c, const Dataset& ds, const Fold& fold, std::size_t fold_index) {
  const auto labels = task_labels(c, ds);
  const auto& records = task_records(c, ds);
  const std::uint64_t seed = derive_seed(c.seed, 100 + fold_index);

  std::vector<std::size_t> fit_rows = fold.train, val_rows;
  if (c.validation_fraction > 0.0) {
    std::vector<int> y;
    for (auto r : fold.train) y.push_back(labels[r]);
    const auto h = stratified_holdout(y, c.validation_fraction, derive_seed(seed, 3));
    fit_rows.clear();
    for (auto i : h.train) fit_rows.push_back(fold.train[i]);
    for (auto i : h.test) val_rows.push_back(fold.train[i]);
  }

  auto transforms = fit_transforms(c, ds, fit_rows);
  TrainData td;
  td.inputs = apply_transforms(transforms, ds, fit_rows);
  for (auto r : fit_rows) {
    td.labels.push_back(labels[r]);
    td.records.push_back(records[r]);
  }
  if (c.smote_tomek && c.task != Task::mtlr_survival) {
    Matrix all = td.inputs.front();
    for (std::size_t k = 1; k < td.inputs.size(); ++k) all = hconcat(all, td.inputs[k]);
    const auto sm = smote_tomek(all, td.labels, c.smote_k, derive_seed(seed, 4));
    std::size_t col = 0;
    for (auto& m : td.inputs) {
      std::vector<std::size_t> cols(m.cols);
      std::iota(cols.begin(), cols.end(), col);
      col += m.cols;
      m = sm.x.select_cols(cols);
    }
    td.labels = sm.y;
    std::vector<SurvivalRecord> rec;
    for (auto k : sm.kept) rec.push_back(k < td.records.size() ? td.records[k] : SurvivalRecord{});
    td.records = rec;
  }
  TrainData vd;
  if (!val_rows.empty()) {
    vd.inputs = apply_transforms(transforms, ds, val_rows);
    for (auto r : val_rows) {
      vd.labels.push_back(labels[r]);
      vd.records.push_back(records[r]);
    }
  }

  auto result = train(c, td, val_rows.empty() ? nullptr : &vd, derive_seed(seed, 5));
  FoldOutcome out{std::move(transforms), result.weights, fit_rows, std::move(result), {}, {}};
  if (!fold.test.empty()) {
    out.scores = predict(out.result.model, apply_transforms(out.transforms, ds, fold.test), c.task);
    std::vector<int> y;
    std::vector<SurvivalRecord> r;
    for (auto i : fold.test) {
      y.push_back(labels[i]);
      r.push_back(records[i]);
    }
    out.metrics = evaluate_predictions(out.scores, y, r, c.task);
  }
  return out;
}

namespace {

FoldReport report_from(const RunConfig& c, const Dataset& ds, const std::vector<Fold>& folds,
                       const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& best_epochs) {
  const auto labels = task_labels(c, ds);
  const auto& records = task_records(c, ds);
  std::vector<std::optional<PatientPrediction>> by_row(ds.size());
  for (std::size_t f = 0; f < folds.size(); ++f)
    for (std::size_t j = 0; j < folds[f].test.size(); ++j) {
      const auto i = folds[f].test[j];
      by_row[i] = PatientPrediction{ds.ids[i], f, scores[f][j], labels[i], records[i]};
    }
  std::vector<PatientPrediction> preds;
  for (auto& p : by_row)
    if (p) preds.push_back(*p);
  auto rep = evaluate_report(preds, c.task);
  rep.best_epochs = best_epochs;
  return rep;
}

}  // namespace

CvResult cross_validate(const RunConfig& c, const Dataset& ds, unsigned workers) {
  c.validate();
  const auto folds = stratified_kfold(task_labels(c, ds), c.folds, c.seed);
  std::vector<std::optional<FoldOutcome>> outs(folds.size());
  parallel_for(folds.size(), workers, [&](std::size_t f) { outs[f] = run_fold(c, ds, folds[f], f); });
  CvResult res;
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> epochs;
  for (auto& o : outs) {
    scores.push_back(o->scores);
    epochs.push_back(o->result.best_epoch);
    res.folds.push_back(std::move(*o));
  }
  res.report = report_from(c, ds, folds, scores, epochs);
  return res;
}

GridResult grid_search(const RunConfig& base, const std::vector<GridAxis>& axes, const Dataset& ds, unsigned workers) {
  if (axes.empty()) throw ConfigError("grid_search: empty grid");
  for (const auto& a : axes)
    if (a.values.empty()) throw ConfigError("grid_search: axis " + a.key + " has no values");
  std::vector<GridCell> cells(1);
  for (const auto& a : axes) {
    std::vector<GridCell> next;
    for (const auto& cell : cells)
      for (const auto& v : a.values) {
        auto e = cell;
        e.assignment.push_back({a.key, v});
        next.push_back(e);
      }
    cells = next;
  }
  std::vector<RunConfig> configs;
  for (const auto& cell : cells) {
    RunConfig rc = base;
    rc.grid.clear();
    for (const auto& [k, v] : cell.assignment) set_key(rc, k, v);
    rc.validate();
    configs.push_back(rc);
  }
  const auto folds = stratified_kfold(task_labels(base, ds), base.folds, base.seed);
  const std::size_t nf = folds.size();
  std::vector<std::vector<double>> scores(cells.size() * nf);
  std::vector<std::size_t> epochs(cells.size() * nf);
  parallel_for(cells.size() * nf, workers, [&](std::size_t job) {
    auto o = run_fold(configs[job / nf], ds, folds[job % nf], job % nf);
    scores[job] = std::move(o.scores);
    epochs[job] = o.result.best_epoch;
  });
  GridResult res;
  std::vector<FoldReport> reports;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<std::vector<double>> s(scores.begin() + i * nf, scores.begin() + (i + 1) * nf);
    std::vector<std::size_t> e(epochs.begin() + i * nf, epochs.begin() + (i + 1) * nf);
    reports.push_back(report_from(configs[i], ds, folds, s, e));
    cells[i].mean = reports.back().mean.at(reports.back().metric);
    cells[i].sd = reports.back().sd.at(reports.back().metric);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].mean > cells[best].mean ||
        (cells[i].mean == cells[best].mean && cells[i].assignment < cells[best].assignment))
      best = i;
  res.cells = cells;
  res.best = best;
  res.best_config = configs[best];
  res.best_report = reports[best];
  return res;
}

KmStratification km_stratify(std::span<const double> scores, std::span<const SurvivalRecord> records,
                             double horizon_months) {
  if (scores.size() != records.size() || scores.empty()) throw ShapeError("km_stratify: misaligned inputs");
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(landmark_label(r, horizon_months));
  const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
  KmStratification km;
  km.threshold = both ? youden_threshold(scores, labels) : quantile({scores.begin(), scores.end()}, 0.5);
  auto split = [&](double t, std::vector<SurvivalRecord>& hi, std::vector<SurvivalRecord>& lo) {
    hi.clear();
    lo.clear();
    for (std::size_t i = 0; i < scores.size(); ++i) (scores[i] >= t ? hi : lo).push_back(records[i]);
  };
  std::vector<SurvivalRecord> hi, lo;
  split(km.threshold, hi, lo);
  if (hi.empty() || lo.empty()) {
    km.threshold = quantile({scores.begin(), scores.end()}, 0.5);
    split(km.threshold, hi, lo);
  }
  if (hi.empty() || lo.empty()) throw ShapeError("km_stratify: scores do not separate into two groups");
  km.high = km_fit(hi);
  km.low = km_fit(lo);
  km.n_high = hi.size();
  km.n_low = lo.size();
  km.test = logrank(hi, lo);
  return km;
}

std::string km_csv(const KmStratification& km) {
  std::ostringstream out;
  out << "group,time,survival,at_risk,events\n";
  for (const auto& [name, curve] : {std::pair{"high", &km.high}, std::pair{"low", &km.low}})
    for (std::size_t i = 0; i < curve->times.size(); ++i)
      out << name << "," << fmt(curve->times[i]) << "," << fmt(curve->survival[i]) << "," << curve->at_risk[i] << ","
          << curve->events[i] << "\n";
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

nlohmann::json km_json(const KmStratification& km) {
  return {{"threshold", km.threshold}, {"n_high", km.n_high},           {"n_low", km.n_low},
          {"chi_square", km.test.chi_square}, {"p_value", km.test.p_value}};
}

}  // namespace

TrainArtifacts run_training(const RunConfig& c, unsigned workers) {
  c.validate();
  c.validate_paths();
  const auto ds = load_dataset(c.clinical_csv, c.features_csv);
  const std::filesystem::path out_dir(c.output_dir);
  std::filesystem::create_directories(out_dir);

  TrainArtifacts art;
  if (!c.grid.empty()) {
    auto g = grid_search(c, c.grid, ds, workers);
    art.report = g.best_report;
    art.grid = g.cells;
    art.config = g.best_config;
  } else {
    art.report = cross_validate(c, ds, workers).report;
    art.config = c;
  }
  const auto& cfg = art.config;

  nlohmann::json report = to_json(art.report);
  report["config"] = to_text(cfg);
  // stratify pooled CV predictions against the configured outcome
  {
    std::vector<double> s;
    std::vector<SurvivalRecord> r;
    const auto& rec = ds.outcomes[static_cast<std::size_t>(cfg.outcome)];
    std::map<std::string, std::size_t> row;
    for (std::size_t i = 0; i < ds.size(); ++i) row[ds.ids[i]] = i;
    for (const auto& p : art.report.predictions) {
      s.push_back(p.score);
      r.push_back(rec[row.at(p.id)]);
    }
    const auto km = km_stratify(s, r, cfg.horizon_months);
    report["km"] = km_json(km);
    write_text(out_dir / "km.csv", km_csv(km));
  }
  if (!art.grid.empty()) {
    auto cells = nlohmann::json::array();
    std::ostringstream csv;
    for (const auto& [k, v] : art.grid.front().assignment) csv << k << ",";
    csv << "mean,sd\n";
    for (const auto& cell : art.grid) {
      nlohmann::json a;
      for (const auto& [k, v] : cell.assignment) {
        a[k] = v;
        csv << v << ",";
      }
      csv << fmt(cell.mean) << "," << fmt(cell.sd) << "\n";
      cells.push_back({{"assignment", a}, {"mean", cell.mean}, {"sd", cell.sd}});
    }
    report["grid"] = cells;
    write_text(out_dir / "grid.csv", csv.str());
  }
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  write_text(out_dir / "folds.csv", folds_csv(art.report));
  write_text(out_dir / "predictions.csv", predictions_csv(art.report.predictions));

  Fold all;
  all.train = iota_rows(ds.size());
  auto final_fold = run_fold(cfg, ds, all, cfg.folds);
  nlohmann::json extra;
  extra["run_config"] = to_text(cfg);
  extra["transforms"] = to_json(final_fold.transforms);
  extra["bins"] = final_fold.result.bins.boundaries;
  extra["class_weights"] = {final_fold.weights.w0, final_fold.weights.w1};
  extra["best_epoch"] = final_fold.result.best_epoch;
  nlohmann::json names;
  for (const auto& m : cfg.modalities) names[m] = ds.feature_names[ds.modality_index(m)];
  extra["feature_names"] = names;
  save_checkpoint(out_dir / "model.ckpt", final_fold.result.model, extra);
  return art;
}

nlohmann::json evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& ds,
                                   std::vector<PatientPrediction>* predictions) {
  auto loaded = load_checkpoint(checkpoint);
  RunConfig cfg;
  FoldTransforms t;
  try {
    cfg = parse_run_config(loaded.extra.at("run_config").get<std::string>());
    t = transforms_from_json(loaded.extra.at("transforms"));
    for (const auto& m : cfg.modalities) {
      const auto expected = loaded.extra.at("feature_names").at(m).get<std::vector<std::string>>();
      if (expected != ds.feature_names[ds.modality_index(m)])
        throw ShapeError("evaluate: feature columns for " + m + " differ from the training data");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto rows = iota_rows(ds.size());
  const auto scores = predict(loaded.model, apply_transforms(t, ds, rows), cfg.task);
  const auto labels = task_labels(cfg, ds);
  const auto& records = task_records(cfg, ds);
  const auto metrics = evaluate_predictions(scores, labels, records, cfg.task);
  if (predictions) {
    predictions->clear();
    for (auto i : rows) predictions->push_back({ds.ids[i], 0, scores[i], labels[i], records[i]});
  }
  return {{"task", to_string(cfg.task)}, {"n", ds.size()}, {"metrics", metrics}};
}

}  // namespace amoene
