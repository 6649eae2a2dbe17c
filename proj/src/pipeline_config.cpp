#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "amoene/pipeline.hpp"

namespace amoene {

std::string to_string(Task t) {
  switch (t) {
    case Task::grade_classification: return "grade_classification";
    case Task::binary_2y: return "binary_2y";
    case Task::mtlr_survival: return "mtlr_survival";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "grade_classification") return Task::grade_classification;
  if (s == "binary_2y") return Task::binary_2y;
  if (s == "mtlr_survival") return Task::mtlr_survival;
  throw ConfigError("unknown task '" + s + "'");
}

std::string to_string(FeatureReduction r) {
  switch (r) {
    case FeatureReduction::none: return "none";
    case FeatureReduction::pca: return "pca";
    case FeatureReduction::lasso: return "lasso";
  }
  return "?";
}

FeatureReduction reduction_from_string(const std::string& s) {
  if (s == "none") return FeatureReduction::none;
  if (s == "pca") return FeatureReduction::pca;
  if (s == "lasso") return FeatureReduction::lasso;
  throw ConfigError("unknown reduction '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a real number, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Key size_key(std::string name, T RunConfig::*member) {
  return {name, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [name, member](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_u64(name, v)); }};
}

Key real_key(std::string name, double RunConfig::*member) {
  return {name, [member](const RunConfig& c) { return format_double(c.*member); },
          [name, member](RunConfig& c, const std::string& v) { c.*member = parse_double(name, v); }};
}

Key string_key(std::string name, std::string RunConfig::*member) {
  return {name, [member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"task", [](const RunConfig& c) { return to_string(c.task); },
                 [](RunConfig& c, const std::string& v) { c.task = task_from_string(v); }});
    k.push_back({"outcome", [](const RunConfig& c) { return to_string(c.outcome); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.outcome = outcome_from_string(v);
                   } catch (const std::exception&) {
                     throw ConfigError("unknown outcome '" + v + "'");
                   }
                 }});
    k.push_back({"scheme", [](const RunConfig& c) { return to_string(c.scheme); },
                 [](RunConfig& c, const std::string& v) { c.scheme = scheme_from_string(v); }});
    k.push_back({"modalities",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.modalities.size(); ++i) s += (i ? "," : "") + c.modalities[i];
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   auto list = split_list(v);
                   for (const auto& m : list)
                     if (m != "clinical" && m != "primary" && m != "nodal")
                       throw ConfigError("modalities: unknown modality '" + m + "'");
                   auto sorted = list;
                   std::sort(sorted.begin(), sorted.end());
                   if (list.empty() || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                     throw ConfigError("modalities: need a non-empty list without repeats");
                   c.modalities = list;
                 }});
    k.push_back({"fusion", [](const RunConfig& c) { return to_string(c.fusion); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.fusion = fusion_from_string(v);
                   } catch (const std::exception&) {
                     throw ConfigError("unknown fusion '" + v + "'");
                   }
                 }});
    k.push_back(size_key("latent_dim", &RunConfig::latent_dim));
    k.push_back(size_key("heads", &RunConfig::heads));
    k.push_back(real_key("dropout", &RunConfig::dropout));
    k.push_back(real_key("lr", &RunConfig::lr));
    k.push_back(size_key("batch_size", &RunConfig::batch_size));
    k.push_back(size_key("epochs", &RunConfig::epochs));
    k.push_back(real_key("validation_fraction", &RunConfig::validation_fraction));
    k.push_back({"scaler", [](const RunConfig& c) { return std::string(c.scaler ? "standard" : "none"); },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "standard" && v != "none") throw ConfigError("scaler: expected standard or none");
                   c.scaler = v == "standard";
                 }});
    k.push_back({"reduction", [](const RunConfig& c) { return to_string(c.reduction); },
                 [](RunConfig& c, const std::string& v) { c.reduction = reduction_from_string(v); }});
    k.push_back(size_key("pca_components", &RunConfig::pca_components));
    k.push_back(real_key("lasso_lambda", &RunConfig::lasso_lambda));
    k.push_back(real_key("lasso_l1_ratio", &RunConfig::lasso_l1_ratio));
    k.push_back({"smote_tomek", [](const RunConfig& c) { return std::string(c.smote_tomek ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.smote_tomek = parse_bool("smote_tomek", v); }});
    k.push_back(size_key("smote_k", &RunConfig::smote_k));
    k.push_back(real_key("horizon_months", &RunConfig::horizon_months));
    k.push_back(size_key("folds", &RunConfig::folds));
    k.push_back(size_key("seed", &RunConfig::seed));
    k.push_back(string_key("clinical_csv", &RunConfig::clinical_csv));
    k.push_back(string_key("features_csv", &RunConfig::features_csv));
    k.push_back(string_key("output_dir", &RunConfig::output_dir));
    return k;
  }();
  return table;
}

const Key& find_key(const std::string& name) {
  for (const auto& k : keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

void set_key(RunConfig& c, const std::string& key, const std::string& value) { find_key(key).set(c, trim(value)); }

std::string get_key(const RunConfig& c, const std::string& key) { return find_key(key).get(c); }

void RunConfig::validate() const {
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (latent_dim < 1 || heads < 1 || latent_dim % heads != 0)
    throw ConfigError("latent_dim must be a positive multiple of heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction <= 0.5))
    throw ConfigError("validation_fraction must lie in [0,0.5]");
  if (pca_components < 1) throw ConfigError("pca_components must be positive");
  if (!(lasso_lambda >= 0.0) || !(lasso_l1_ratio >= 0.0 && lasso_l1_ratio <= 1.0))
    throw ConfigError("lasso_lambda must be >= 0 and lasso_l1_ratio in [0,1]");
  if (smote_k < 1) throw ConfigError("smote_k must be positive");
  if (!(horizon_months > 0.0)) throw ConfigError("horizon_months must be positive");
  if (modalities.empty()) throw ConfigError("modalities must not be empty");
  for (const auto& axis : grid) {
    if (axis.values.empty()) throw ConfigError("grid." + axis.key + " has no values");
    if (axis.key.rfind("grid.", 0) == 0) throw ConfigError("nested grid key " + axis.key);
    RunConfig probe = *this;
    probe.grid.clear();
    for (const auto& v : axis.values) {
      set_key(probe, axis.key, v);
      probe.validate();
    }
  }
}

void RunConfig::validate_paths() const {
  namespace fs = std::filesystem;
  for (const auto& [key, path] : {std::pair{"clinical_csv", clinical_csv}, std::pair{"features_csv", features_csv}})
    if (path.empty() || !fs::is_regular_file(path)) throw ConfigError(std::string(key) + ": no such file '" + path + "'");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(c) + "\n";
  for (const auto& axis : c.grid) {
    out += "grid." + axis.key + " =";
    for (std::size_t i = 0; i < axis.values.size(); ++i) out += (i ? ", " : " ") + axis.values[i];
    out += "\n";
  }
  return out;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    seen.push_back(key);
    if (key.rfind("grid.", 0) == 0) {
      GridAxis axis{key.substr(5), split_list(value)};
      find_key(axis.key);
      c.grid.push_back(std::move(axis));
      continue;
    }
    try {
      set_key(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

unsigned workers_from_env() {
  const char* v = std::getenv("AMOENE_WORKERS");
  if (!v || !*v) return 1;
  const std::string s(v);
  const auto n = parse_u64("AMOENE_WORKERS", s);
  if (n < 1 || n > 1024) throw ConfigError("AMOENE_WORKERS must lie in [1,1024]");
  return static_cast<unsigned>(n);
}

}  // namespace amoene
