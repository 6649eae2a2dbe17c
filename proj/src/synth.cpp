#include "amoene/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <thread>

#include "amoene/random.hpp"
#include "amoene/volume_io.hpp"

namespace amoene {

namespace {

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

double sphere_log_volume(double r) { return std::log(4.0 / 3.0 * M_PI * r * r * r); }
double sphere_radius(double log_volume) { return std::cbrt(std::exp(log_volume) * 3.0 / (4.0 * M_PI)); }

}  // namespace

PlantedOutcome plant_survival(const Matrix& features, const PlantConfig& config, OutcomeKind kind) {
  const std::size_t n = features.rows, p = features.cols;
  if (n == 0) throw ShapeError("plant_survival: no patients");
  if (config.beta.size() != p) throw ShapeError("plant_survival: beta length does not match feature count");
  if (config.gamma != 0.0 && (config.nodal_index >= p || config.primary_index >= p))
    throw ShapeError("plant_survival: interaction index out of range");
  if (!(config.censoring_rate >= 0.0 && config.censoring_rate <= 1.0))
    throw ConfigError("plant_survival: censoring rate must lie in [0,1]");
  if (!(config.median_months > 0.0)) throw ConfigError("plant_survival: median must be positive");

  // z-score columns; constant columns contribute nothing
  Matrix z = features;
  if (n > 1) z = apply(fit_scaler(features), features);
  else std::fill(z.data.begin(), z.data.end(), 0.0);

  PlantedOutcome out;
  const double h0 = std::log(2.0) / config.median_months;
  Rng rng(derive_seed(config.seed, 17, static_cast<std::uint64_t>(kind)));
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lp = 0.0;
    for (std::size_t j = 0; j < p; ++j) lp += config.beta[j] * z(i, j);
    if (config.gamma != 0.0) lp += config.gamma * z(i, config.nodal_index) * z(i, config.primary_index);
    if (!std::isfinite(lp)) throw NumericError("plant_survival: non-finite linear predictor");
    out.linear_predictor.push_back(lp);
    double e = uniform01(rng);
    while (e <= 0.0) e = uniform01(rng);
    out.event_times.push_back(-std::log(e) / (h0 * std::exp(lp)));
    u[i] = uniform01(rng);
  }

  // censored fraction as a function of c_max is non-increasing; bisect in log space
  auto censored_fraction = [&](double cmax) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += u[i] * cmax < out.event_times[i];
    return static_cast<double>(c) / static_cast<double>(n);
  };
  double cmax;
  if (config.censoring_rate <= 0.0) {
    cmax = std::numeric_limits<double>::infinity();
  } else {
    double lo = -30.0, hi = 30.0;  // log c_max
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (censored_fraction(std::exp(mid)) > config.censoring_rate) lo = mid;
      else hi = mid;
    }
    cmax = std::exp(hi);
  }
  out.censor_max = cmax;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = std::isinf(cmax) ? std::numeric_limits<double>::infinity() : u[i] * cmax;
    out.censor_times.push_back(c);
    const bool event = out.event_times[i] <= c;
    out.records.push_back({event ? out.event_times[i] : std::max(c, 1e-6), event, kind});
  }
  return out;
}

void CohortConfig::validate() const {
  if (n_patients == 0) throw ConfigError("cohort needs at least one patient");
  double s = 0.0;
  for (double p : grade_proportions) {
    if (!(p >= 0.0)) throw ConfigError("grade proportions must be non-negative");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("grade proportions must sum to 1");
  for (double r : censoring_rate)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("censoring rates must lie in [0,1]");
  if (beta.size() != kLatentNames.size())
    throw ConfigError("beta must have " + std::to_string(kLatentNames.size()) + " entries");
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
  if (!(median_months > 0.0)) throw ConfigError("median survival must be positive");
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 16 || !(spacing[a] > 0.0)) throw ConfigError("volume grid too small");
}

std::vector<double> clinical_features(const ClinicalRow& r) {
  return {r.age, static_cast<double>(r.sex), r.pack_years, static_cast<double>(r.t_stage),
          static_cast<double>(r.n_stage), static_cast<double>(r.chemo), static_cast<double>(r.chemo_type)};
}

Cohort generate_cohort(const CohortConfig& config) {
  config.validate();
  Cohort cohort;
  cohort.config = config;
  const std::size_t n = config.n_patients;
  Matrix latent(n, kLatentNames.size());
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(config.seed, i, 0));
    PatientRecord p;
    char id[32];
    std::snprintf(id, sizeof id, "P%04zu", i);
    p.id = id;
    const double g = uniform01(rng);
    double acc = 0.0;
    p.grade = 3;
    for (int k = 0; k < 4; ++k) {
      acc += config.grade_proportions[k];
      if (g < acc) {
        p.grade = k;
        break;
      }
    }
    const double gr = p.grade;
    auto& c = p.clinical;
    c.age = clamp(62.0 + 9.0 * standard_normal(rng), 30.0, 90.0);
    c.sex = bernoulli(rng, 0.8);
    c.pack_years = std::max(0.0, 20.0 + 5.0 * gr + 15.0 * standard_normal(rng));
    c.t_stage = 1 + static_cast<int>(uniform_index(rng, 4));
    c.n_stage = std::min(3, static_cast<int>(gr / 1.5) + static_cast<int>(uniform_index(rng, 2)));
    c.chemo = bernoulli(rng, 0.4 + 0.15 * gr);
    c.chemo_type = c.chemo ? 1 + bernoulli(rng, 0.3) : 0;

    const double r_node = clamp(4.0 + 1.0 * gr + 1.2 * standard_normal(rng), 2.5, 9.0);
    const double rough = clamp(0.15 + 0.2 * gr + 0.15 * standard_normal(rng), 0.0, 1.0);
    const double r_primary = clamp(7.0 + 1.5 * standard_normal(rng), 3.5, 10.0);
    const double intensity = 55.0 + 8.0 * standard_normal(rng);
    p.n_nodes = 1;
    for (int k = 0; k < 4; ++k) p.n_nodes += bernoulli(rng, 0.15 + 0.15 * gr);
    p.latent = {c.age, c.pack_years, sphere_log_volume(r_node), rough, sphere_log_volume(r_primary), intensity};
    std::copy(p.latent.begin(), p.latent.end(), latent.row(i).begin());
    cohort.patients.push_back(std::move(p));
  }
  for (int k = 0; k < 3; ++k) {
    PlantConfig pc;
    pc.beta = config.beta;
    pc.gamma = config.gamma;
    pc.censoring_rate = config.censoring_rate[k];
    pc.median_months = config.median_months;
    pc.seed = config.seed;
    const auto kind = static_cast<OutcomeKind>(k);
    auto planted = plant_survival(latent, pc, kind);
    for (std::size_t i = 0; i < n; ++i) {
      cohort.patients[i].outcomes[k] = planted.records[i];
      cohort.patients[i].true_risk[k] = planted.linear_predictor[i];
    }
  }
  return cohort;
}

namespace {

struct Blob {
  std::array<double, 3> centre;  // mm
  std::array<double, 3> axes;    // mm
  double irregularity;
  std::array<double, 4> phase;
};

double blob_radius_scale(const Blob& b, double dx, double dy, double dz) {
  const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (r == 0.0) return 1.0;
  const double theta = std::acos(dz / r), phi = std::atan2(dy, dx);
  return 1.0 + b.irregularity * (std::sin(3.0 * theta + b.phase[0]) * std::cos(2.0 * phi + b.phase[1]) +
                                 0.5 * std::cos(5.0 * phi + b.phase[2]) * std::sin(2.0 * theta + b.phase[3]));
}

template <typename F>
void for_each_inside(const Grid& g, const Blob& b, F&& f) {
  const double reach = 1.0 + 1.5 * b.irregularity;
  std::array<std::size_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    const double l = (b.centre[a] - b.axes[a] * reach) / g.spacing[a];
    const double h = (b.centre[a] + b.axes[a] * reach) / g.spacing[a];
    lo[a] = static_cast<std::size_t>(std::max(0.0, std::floor(l)));
    hi[a] = static_cast<std::size_t>(std::clamp(std::ceil(h), 0.0, static_cast<double>(g.dims[a] - 1)));
  }
  for (auto x = lo[0]; x <= hi[0]; ++x)
    for (auto y = lo[1]; y <= hi[1]; ++y)
      for (auto z = lo[2]; z <= hi[2]; ++z) {
        const double dx = (x * g.spacing[0] - b.centre[0]) / b.axes[0];
        const double dy = (y * g.spacing[1] - b.centre[1]) / b.axes[1];
        const double dz = (z * g.spacing[2] - b.centre[2]) / b.axes[2];
        const double s = blob_radius_scale(b, dx, dy, dz);
        if (dx * dx + dy * dy + dz * dz <= s * s) f(g.index(x, y, z));
      }
}

Blob make_blob(Rng& rng, std::array<double, 3> centre, double radius, double irregularity) {
  Blob b;
  b.centre = centre;
  const double ax = 1.0 + 0.15 * (uniform01(rng) - 0.5), ay = 1.0 + 0.15 * (uniform01(rng) - 0.5);
  b.axes = {radius * ax, radius * ay, radius / (ax * ay)};
  b.irregularity = irregularity;
  for (auto& ph : b.phase) ph = uniform(rng, 0.0, 2.0 * M_PI);
  return b;
}

double blob_extent(const Blob& b) {
  return *std::max_element(b.axes.begin(), b.axes.end()) * (1.0 + 1.5 * b.irregularity);
}

}  // namespace

PatientImages render_patient(const CohortConfig& config, const PatientRecord& patient, std::size_t index) {
  Rng rng(derive_seed(config.seed, index, 1));
  const Grid g{config.dims, config.spacing};
  std::array<double, 3> extent{};
  for (int a = 0; a < 3; ++a) extent[a] = static_cast<double>(g.dims[a] - 1) * g.spacing[a];

  PatientImages im;
  im.ct = {g, std::vector<double>(g.size())};
  im.uncertainty = {g, std::vector<double>(g.size(), 0.0)};
  im.nodal = {g, std::vector<std::uint8_t>(g.size(), 0)};
  im.primary = {g, std::vector<std::uint8_t>(g.size(), 0)};
  for (auto& v : im.ct.voxels) v = 20.0 + config.noise * standard_normal(rng);

  const double gr = patient.grade;
  const double r_primary = sphere_radius(patient.latent[kPrimaryLatent]);
  Blob primary = make_blob(rng,
                           {extent[0] * 0.5 + uniform(rng, -4, 4), extent[1] * 0.3 + uniform(rng, -4, 4),
                            extent[2] * 0.5 + uniform(rng, -4, 4)},
                           r_primary, 0.05);
  for_each_inside(g, primary, [&](std::size_t i) {
    im.primary.voxels[i] = 1;
    im.ct.voxels[i] = patient.latent[5] + 8.0 * standard_normal(rng) + 0.5 * (im.ct.voxels[i] - 20.0);
  });

  std::vector<Blob> placed{primary};
  const double r_main = sphere_radius(patient.latent[kNodalLatent]);
  const double rough = patient.latent[3];
  for (std::size_t k = 0; k < patient.n_nodes; ++k) {
    const double r = k == 0 ? r_main : r_main * std::cbrt(uniform(rng, 0.15, 0.9));
    const double irr = clamp(0.04 + 0.06 * gr + 0.05 * uniform01(rng), 0.0, 0.3);
    for (int attempt = 0; attempt < 300; ++attempt) {
      std::array<double, 3> c{};
      const double margin = r * (1.0 + 1.5 * irr) + 2.0;
      for (int a = 0; a < 3; ++a) c[a] = uniform(rng, margin, extent[a] - margin);
      Blob b = make_blob(rng, c, r, irr);
      bool clear = true;
      for (const auto& o : placed) {
        double d2 = 0;
        for (int a = 0; a < 3; ++a) d2 += (o.centre[a] - c[a]) * (o.centre[a] - c[a]);
        if (std::sqrt(d2) < blob_extent(o) + blob_extent(b) + 3.0) clear = false;
      }
      if (!clear) continue;
      placed.push_back(b);
      Mask m{g, std::vector<std::uint8_t>(g.size(), 0)};
      const double u = k == 0 ? uniform(rng, 0.05, 0.15) : uniform(rng, 0.2, 0.6);
      for_each_inside(g, b, [&](std::size_t i) {
        m.voxels[i] = 1;
        im.nodal.voxels[i] = 1;
        im.uncertainty.voxels[i] = u;
        im.ct.voxels[i] = 35.0 + 25.0 * rough * standard_normal(rng) + 0.5 * (im.ct.voxels[i] - 20.0);
      });
      im.node_masks.push_back(std::move(m));
      break;
    }
  }
  if (im.node_masks.empty()) throw ShapeError("render_patient: could not place the main node");
  for (auto& v : im.ct.voxels) v = static_cast<double>(static_cast<float>(v));
  return im;
}

std::vector<std::string> clinical_csv_header() {
  return {"patient_id", "age",      "sex",      "pack_years", "t_stage",  "n_stage",  "chemo",   "chemo_type",
          "grade",      "os_time",  "os_event", "dm_time",    "dm_event", "dfs_time", "dfs_event"};
}

void write_cohort(const std::filesystem::path& dir, const Cohort& cohort, unsigned workers) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "volumes");
  {
    std::ofstream csv(dir / "clinical.csv");
    if (!csv) throw ConfigError("cannot write " + (dir / "clinical.csv").string());
    csv << std::setprecision(17);
    const auto header = clinical_csv_header();
    for (std::size_t i = 0; i < header.size(); ++i) csv << (i ? "," : "") << header[i];
    csv << "\n";
    for (const auto& p : cohort.patients) {
      const auto& c = p.clinical;
      csv << p.id << "," << c.age << "," << c.sex << "," << c.pack_years << "," << c.t_stage << "," << c.n_stage
          << "," << c.chemo << "," << c.chemo_type << "," << p.grade;
      for (const auto& o : p.outcomes) csv << "," << o.time << "," << (o.event ? 1 : 0);
      csv << "\n";
    }
  }
  {
    std::ofstream csv(dir / "oracle.csv");
    csv << std::setprecision(17) << "patient_id,os_risk,dm_risk,dfs_risk";
    for (const auto& name : kLatentNames) csv << "," << name;
    csv << "\n";
    for (const auto& p : cohort.patients) {
      csv << p.id;
      for (double r : p.true_risk) csv << "," << r;
      for (double v : p.latent) csv << "," << v;
      csv << "\n";
    }
  }
  const std::size_t n = cohort.patients.size();
  std::vector<std::exception_ptr> errors(std::max(1u, workers));
  auto work = [&](unsigned w) {
    try {
      for (std::size_t i = w; i < n; i += errors.size()) {
        const auto& p = cohort.patients[i];
        const auto im = render_patient(cohort.config, p, i);
        const auto base = dir / "volumes" / p.id;
        write_volume(base.string() + "_ct.json", im.ct);
        write_mask(base.string() + "_nodal.json", im.nodal);
        write_mask(base.string() + "_primary.json", im.primary);
        write_volume(base.string() + "_uncertainty.json", im.uncertainty);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < errors.size(); ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace amoene
