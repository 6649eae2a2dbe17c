#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "amoene/pipeline.hpp"
#include "amoene/random.hpp"
#include "amoene/volume_io.hpp"

namespace amoene {

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t start) {
    for (std::size_t i = start; i < n; i += w) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < w; ++t) pool.emplace_back(run, t);
  run(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t Dataset::modality_index(const std::string& name) const {
  for (std::size_t i = 0; i < modality_names.size(); ++i)
    if (modality_names[i] == name) return i;
  throw ConfigError("dataset has no modality '" + name + "'");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& file) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError(file + ": missing column " + name);
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Csv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  csv.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != csv.header.size())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(csv.header.size()) + " fields");
    csv.rows.push_back(std::move(cells));
  }
  return csv;
}

double to_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(where + ": not a number '" + s + "'");
  return v;
}

const std::array<std::string, 3> kOutcomePrefix{"os", "dm", "dfs"};

struct ClinicalTable {
  std::vector<std::string> ids;
  Matrix clinical;
  std::vector<int> grades;
  std::array<std::vector<SurvivalRecord>, 3> outcomes;
};

ClinicalTable read_clinical(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  const std::string file = path.string();
  ClinicalTable t;
  const auto id_col = csv.column("patient_id", file);
  const auto grade_col = csv.column("grade", file);
  std::vector<std::size_t> feat_cols;
  for (const auto& name : kClinicalFeatureNames) feat_cols.push_back(csv.column(name, file));
  t.clinical = Matrix(csv.rows.size(), feat_cols.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    t.ids.push_back(row[id_col]);
    for (std::size_t j = 0; j < feat_cols.size(); ++j) t.clinical(i, j) = to_number(row[feat_cols[j]], file);
    const double g = to_number(row[grade_col], file);
    if (g != std::floor(g) || g < 0 || g > 3) throw ConfigError(file + ": grade must be 0..3");
    t.grades.push_back(static_cast<int>(g));
    for (std::size_t k = 0; k < 3; ++k) {
      SurvivalRecord r;
      r.time = to_number(row[csv.column(kOutcomePrefix[k] + "_time", file)], file);
      r.event = to_number(row[csv.column(kOutcomePrefix[k] + "_event", file)], file) != 0.0;
      r.kind = static_cast<OutcomeKind>(k);
      try {
        validate(r);
      } catch (const std::exception& e) {
        throw ConfigError(file + ": patient " + t.ids.back() + ": " + e.what());
      }
      t.outcomes[k].push_back(r);
    }
  }
  auto sorted = t.ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError(file + ": duplicate patient_id");
  return t;
}

std::vector<std::string> region_columns() {
  std::vector<std::string> cols{"nodal.components"};
  for (const auto& n : region_feature_names()) cols.push_back("nodal." + n);
  for (const auto& n : region_feature_names()) cols.push_back("primary." + n);
  return cols;
}

std::vector<double> region_values(const PatientFeatures& f) {
  std::vector<double> v{static_cast<double>(f.nodal_components)};
  v.insert(v.end(), f.nodal.values.begin(), f.nodal.values.end());
  v.insert(v.end(), f.primary.values.begin(), f.primary.values.end());
  return v;
}

Dataset assemble(ClinicalTable t, const std::vector<std::string>& columns,
                 const std::vector<std::vector<double>>& feature_rows) {
  Dataset ds;
  ds.ids = t.ids;
  ds.grades = t.grades;
  ds.outcomes = t.outcomes;
  ds.modality_names = {"clinical"};
  ds.modalities = {t.clinical};
  ds.feature_names = {kClinicalFeatureNames};
  for (const std::string region : {"primary", "nodal"}) {
    std::vector<std::size_t> idx;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].rfind(region + ".", 0) == 0) {
        idx.push_back(j);
        names.push_back(columns[j].substr(region.size() + 1));
      }
    if (idx.empty()) continue;
    Matrix m(ds.ids.size(), idx.size());
    for (std::size_t i = 0; i < ds.ids.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) m(i, j) = feature_rows[i][idx[j]];
    ds.modality_names.push_back(region);
    ds.modalities.push_back(std::move(m));
    ds.feature_names.push_back(names);
  }
  return ds;
}

}  // namespace

void write_feature_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const std::vector<PatientFeatures>& features) {
  if (ids.size() != features.size()) throw ShapeError("write_feature_csv: id/feature count mismatch");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "patient_id";
  for (const auto& c : region_columns()) out << "," << c;
  out << "\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (double v : region_values(features[i])) out << "," << fmt(v);
    out << "\n";
  }
}

Dataset load_dataset(const std::filesystem::path& clinical_csv, const std::filesystem::path& features_csv) {
  auto table = read_clinical(clinical_csv);
  const auto csv = read_csv(features_csv);
  const std::string file = features_csv.string();
  const auto id_col = csv.column("patient_id", file);
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) by_id[csv.rows[i][id_col]] = i;
  std::vector<std::string> columns;
  std::vector<std::size_t> col_idx;
  for (std::size_t j = 0; j < csv.header.size(); ++j)
    if (j != id_col) {
      columns.push_back(csv.header[j]);
      col_idx.push_back(j);
    }
  std::vector<std::vector<double>> rows;
  for (const auto& id : table.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError(file + ": no features for patient " + id);
    std::vector<double> r;
    for (auto j : col_idx) r.push_back(to_number(csv.rows[it->second][j], file));
    rows.push_back(std::move(r));
  }
  return assemble(std::move(table), columns, rows);
}

Dataset dataset_from_cohort(const Cohort& cohort, const std::vector<PatientFeatures>& features) {
  if (features.size() != cohort.patients.size()) throw ShapeError("dataset_from_cohort: feature count mismatch");
  ClinicalTable t;
  t.clinical = Matrix(cohort.patients.size(), kClinicalFeatureNames.size());
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) {
    const auto& p = cohort.patients[i];
    t.ids.push_back(p.id);
    const auto c = clinical_features(p.clinical);
    std::copy(c.begin(), c.end(), t.clinical.row(i).begin());
    t.grades.push_back(p.grade);
    for (std::size_t k = 0; k < 3; ++k) t.outcomes[k].push_back(p.outcomes[k]);
  }
  std::vector<std::vector<double>> rows;
  for (const auto& f : features) rows.push_back(region_values(f));
  return assemble(std::move(t), region_columns(), rows);
}

std::vector<PatientFeatures> cohort_features(const Cohort& cohort, const FeatureOptions& options, unsigned workers) {
  std::vector<PatientFeatures> out(cohort.patients.size());
  parallel_for(out.size(), workers, [&](std::size_t i) {
    const auto im = render_patient(cohort.config, cohort.patients[i], i);
    out[i] = extract_patient_features(im.ct, im.nodal, im.primary, &im.uncertainty, options);
  });
  return out;
}

void extract_cohort_features(const std::filesystem::path& dir, const std::filesystem::path& out_csv,
                             const FeatureOptions& options, unsigned workers) {
  const auto table = read_clinical(dir / "clinical.csv");
  std::vector<PatientFeatures> out(table.ids.size());
  parallel_for(out.size(), workers, [&](std::size_t i) {
    const auto base = (dir / "volumes" / table.ids[i]).string();
    const auto ct = read_volume(base + "_ct.json");
    const auto nodal = read_mask(base + "_nodal.json");
    const auto primary = read_mask(base + "_primary.json");
    std::optional<Volume> unc;
    if (std::filesystem::exists(base + "_uncertainty.json")) unc = read_volume(base + "_uncertainty.json");
    out[i] = extract_patient_features(ct, nodal, primary, unc ? &*unc : nullptr, options);
  });
  write_feature_csv(out_csv, table.ids, out);
}

const std::vector<SurvivalRecord>& task_records(const RunConfig& c, const Dataset& ds) {
  return ds.outcomes[static_cast<std::size_t>(c.outcome)];
}

std::vector<int> task_labels(const RunConfig& c, const Dataset& ds) {
  std::vector<int> y;
  const auto& rec = task_records(c, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    switch (c.task) {
      case Task::grade_classification: y.push_back(dichotomize(ds.grades[i], c.scheme)); break;
      case Task::binary_2y: y.push_back(landmark_label(rec[i], c.horizon_months)); break;
      case Task::mtlr_survival: y.push_back(rec[i].event ? 1 : 0); break;
    }
  }
  return y;
}

std::vector<Fold> stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: k must be at least 2");
  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(i);
  for (const auto& [label, members] : classes)
    if (members.size() < k)
      throw ConfigError("stratified_kfold: class " + std::to_string(label) + " has " +
                        std::to_string(members.size()) + " members, fewer than k=" + std::to_string(k));
  std::vector<std::vector<std::size_t>> test(k);
  std::size_t offset = 0;
  for (auto& [label, members] : classes) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label) + 0x9e37));
    shuffle(members.begin(), members.end(), rng);
    // continue the round-robin where the previous class stopped so fold
    // sizes stay balanced
    for (std::size_t j = 0; j < members.size(); ++j) test[(offset + j) % k].push_back(members[j]);
    offset = (offset + members.size()) % k;
  }
  std::vector<Fold> folds(k);
  std::vector<std::size_t> owner(labels.size());
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(test[f].begin(), test[f].end());
    for (auto i : test[f]) owner[i] = f;
    folds[f].test = test[f];
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t f = 0; f < k; ++f)
      if (owner[i] != f) folds[f].train.push_back(i);
  return folds;
}

Fold stratified_holdout(const std::vector<int>& labels, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(i);
  std::vector<std::uint8_t> held(labels.size(), 0);
  for (auto& [label, members] : classes) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label) + 0x7f4a));
    shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size()) + 0.5));
    for (std::size_t j = 0; j < std::min(take, members.size() - 1); ++j) held[members[j]] = 1;
  }
  Fold f;
  for (std::size_t i = 0; i < labels.size(); ++i) (held[i] ? f.test : f.train).push_back(i);
  return f;
}

nlohmann::json to_json(const FoldTransforms& t) {
  auto j = nlohmann::json::array();
  for (const auto& m : t.modalities) {
    nlohmann::json e;
    e["name"] = m.name;
    e["scaler_mean"] = m.scaler.mean;
    e["scaler_std"] = m.scaler.std;
    e["use_pca"] = m.use_pca;
    if (m.use_pca) {
      e["pca_mean"] = m.pca.mean;
      e["pca_rows"] = m.pca.components.rows;
      e["pca_cols"] = m.pca.components.cols;
      e["pca_components"] = m.pca.components.data;
      e["pca_explained_variance"] = m.pca.explained_variance;
      e["pca_explained_variance_ratio"] = m.pca.explained_variance_ratio;
    }
    e["selected"] = m.selected;
    e["output_dim"] = m.output_dim;
    j.push_back(e);
  }
  return j;
}

FoldTransforms transforms_from_json(const nlohmann::json& j) {
  FoldTransforms t;
  try {
    for (const auto& e : j) {
      ModalityTransform m;
      m.name = e.at("name").get<std::string>();
      m.scaler.mean = e.at("scaler_mean").get<std::vector<double>>();
      m.scaler.std = e.at("scaler_std").get<std::vector<double>>();
      m.use_pca = e.at("use_pca").get<bool>();
      if (m.use_pca) {
        m.pca.mean = e.at("pca_mean").get<std::vector<double>>();
        m.pca.components.rows = e.at("pca_rows").get<std::size_t>();
        m.pca.components.cols = e.at("pca_cols").get<std::size_t>();
        m.pca.components.data = e.at("pca_components").get<std::vector<double>>();
        m.pca.explained_variance = e.at("pca_explained_variance").get<std::vector<double>>();
        m.pca.explained_variance_ratio = e.at("pca_explained_variance_ratio").get<std::vector<double>>();
      }
      m.selected = e.at("selected").get<std::vector<std::size_t>>();
      m.output_dim = e.at("output_dim").get<std::size_t>();
      t.modalities.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed transforms: ") + e.what());
  }
  return t;
}

FoldTransforms fit_transforms(const RunConfig& c, const Dataset& ds, const std::vector<std::size_t>& rows) {
  if (rows.size() < 2) throw ShapeError("fit_transforms: need at least two rows");
  std::vector<double> target;
  if (c.reduction == FeatureReduction::lasso) {
    // survival runs select against the landmark label
    RunConfig lc = c;
    if (lc.task == Task::mtlr_survival) lc.task = Task::binary_2y;
    const auto y = task_labels(lc, ds);
    for (auto r : rows) target.push_back(y[r]);
  }
  FoldTransforms t;
  for (const auto& name : c.modalities) {
    ModalityTransform m;
    m.name = name;
    const Matrix x = ds.modalities[ds.modality_index(name)].select_rows(rows);
    if (c.scaler) {
      m.scaler = fit_scaler(x);
    } else {
      m.scaler.mean.assign(x.cols, 0.0);
      m.scaler.std.assign(x.cols, 1.0);
    }
    const Matrix z = apply(m.scaler, x);
    m.output_dim = x.cols;
    if (c.reduction == FeatureReduction::pca) {
      m.use_pca = true;
      const std::size_t n = std::min({c.pca_components, x.cols, rows.size() - 1});
      m.pca = pca_fit(z, n);
      m.output_dim = n;
    } else if (c.reduction == FeatureReduction::lasso) {
      LassoOptions opt;
      opt.lambda = c.lasso_lambda;
      opt.l1_ratio = c.lasso_l1_ratio;
      m.selected = lasso_select(z, target, opt).selected;
      if (m.selected.empty()) {
        // keep the single feature most correlated with the target
        const double ybar = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < z.cols; ++j) {
          double sxy = 0, sxx = 0, syy = 0;
          const auto col = z.col(j);
          const double xbar = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
          for (std::size_t i = 0; i < col.size(); ++i) {
            sxy += (col[i] - xbar) * (target[i] - ybar);
            sxx += (col[i] - xbar) * (col[i] - xbar);
            syy += (target[i] - ybar) * (target[i] - ybar);
          }
          const double r = sxx > 0 && syy > 0 ? std::abs(sxy) / std::sqrt(sxx * syy) : 0.0;
          if (r > best) {
            best = r;
            arg = j;
          }
        }
        m.selected = {arg};
      }
      m.output_dim = m.selected.size();
    }
    t.modalities.push_back(std::move(m));
  }
  return t;
}

std::vector<Matrix> apply_transforms(const FoldTransforms& t, const Dataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<Matrix> out;
  for (const auto& m : t.modalities) {
    const auto& src = ds.modalities[ds.modality_index(m.name)];
    if (src.cols != m.scaler.mean.size())
      throw ShapeError("apply_transforms: modality " + m.name + " has " + std::to_string(src.cols) +
                       " columns, transform expects " + std::to_string(m.scaler.mean.size()));
    Matrix z = apply(m.scaler, src.select_rows(rows));
    if (m.use_pca) z = pca_apply(m.pca, z);
    else if (!m.selected.empty()) z = z.select_cols(m.selected);
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace amoene
