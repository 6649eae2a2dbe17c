#include "amoene/volume.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

namespace amoene {

void validate(const Grid& grid) {
  for (int a = 0; a < 3; ++a) {
    if (grid.dims[a] == 0) throw ShapeError("degenerate volume: zero extent along an axis");
    if (!(grid.spacing[a] > 0.0) || !std::isfinite(grid.spacing[a]))
      throw ShapeError("voxel spacing must be positive");
  }
}

// ---------------------------------------------------------------- resampling

namespace {

Grid isotropic_grid(const Grid& in) {
  Grid out;
  for (int a = 0; a < 3; ++a)
    out.dims[a] = static_cast<std::size_t>(std::ceil(static_cast<double>(in.dims[a]) * in.spacing[a] - 1e-9));
  out.spacing = {1.0, 1.0, 1.0};
  return out;
}

struct Interp {
  std::size_t lo, hi;
  double frac;
};

Interp linear_position(double u, std::size_t n) {
  if (u <= 0.0) return {0, 0, 0.0};
  const double top = static_cast<double>(n - 1);
  if (u >= top) return {n - 1, n - 1, 0.0};
  const auto lo = static_cast<std::size_t>(std::floor(u));
  return {lo, lo + 1, u - static_cast<double>(lo)};
}

std::size_t nearest_position(double u, std::size_t n) {
  const double r = std::floor(u + 0.5);
  if (r <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(r), n - 1);
}

}  // namespace

Volume resample_isotropic(const Volume& vol) {
  validate(vol.grid);
  if (vol.voxels.size() != vol.grid.size()) throw ShapeError("volume voxel count does not match dims");
  Volume out;
  out.grid = isotropic_grid(vol.grid);
  validate(out.grid);
  out.voxels.resize(out.grid.size());
  const auto& g = vol.grid;
  std::array<std::vector<Interp>, 3> axes;
  for (int a = 0; a < 3; ++a)
    for (std::size_t o = 0; o < out.grid.dims[a]; ++o)
      axes[a].push_back(linear_position(static_cast<double>(o) / g.spacing[a], g.dims[a]));
  for (std::size_t x = 0; x < out.grid.dims[0]; ++x)
    for (std::size_t y = 0; y < out.grid.dims[1]; ++y)
      for (std::size_t z = 0; z < out.grid.dims[2]; ++z) {
        const auto &ix = axes[0][x], &iy = axes[1][y], &iz = axes[2][z];
        auto v = [&](std::size_t a, std::size_t b, std::size_t c) { return vol.voxels[g.index(a, b, c)]; };
        auto lerp_z = [&](std::size_t a, std::size_t b) {
          return iz.frac == 0.0 ? v(a, b, iz.lo) : (1.0 - iz.frac) * v(a, b, iz.lo) + iz.frac * v(a, b, iz.hi);
        };
        auto lerp_yz = [&](std::size_t a) {
          return iy.frac == 0.0 ? lerp_z(a, iy.lo) : (1.0 - iy.frac) * lerp_z(a, iy.lo) + iy.frac * lerp_z(a, iy.hi);
        };
        out.voxels[out.grid.index(x, y, z)] =
            ix.frac == 0.0 ? lerp_yz(ix.lo) : (1.0 - ix.frac) * lerp_yz(ix.lo) + ix.frac * lerp_yz(ix.hi);
      }
  return out;
}

Mask resample_isotropic(const Mask& mask) {
  validate(mask.grid);
  if (mask.voxels.size() != mask.grid.size()) throw ShapeError("mask voxel count does not match dims");
  Mask out;
  out.grid = isotropic_grid(mask.grid);
  validate(out.grid);
  out.voxels.resize(out.grid.size());
  const auto& g = mask.grid;
  std::array<std::vector<std::size_t>, 3> axes;
  for (int a = 0; a < 3; ++a)
    for (std::size_t o = 0; o < out.grid.dims[a]; ++o)
      axes[a].push_back(nearest_position(static_cast<double>(o) / g.spacing[a], g.dims[a]));
  for (std::size_t x = 0; x < out.grid.dims[0]; ++x)
    for (std::size_t y = 0; y < out.grid.dims[1]; ++y)
      for (std::size_t z = 0; z < out.grid.dims[2]; ++z)
        out.voxels[out.grid.index(x, y, z)] = mask.voxels[g.index(axes[0][x], axes[1][y], axes[2][z])];
  return out;
}

std::pair<Volume, Mask> resample_isotropic(const Volume& vol, const Mask& mask) {
  if (!(vol.grid == mask.grid)) throw ShapeError("volume and mask grids differ");
  return {resample_isotropic(vol), resample_isotropic(mask)};
}

// ---------------------------------------------------------------- components

namespace {

std::vector<std::array<int, 3>> neighbour_offsets(int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    throw ShapeError("connectivity must be 6, 18 or 26");
  std::vector<std::array<int, 3>> out;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        const int l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (l1 == 0) continue;
        if (connectivity == 6 && l1 > 1) continue;
        if (connectivity == 18 && l1 > 2) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

bool step(const Grid& g, std::size_t i, const std::array<int, 3>& d, std::size_t& j) {
  const auto c = g.coords(i);
  std::array<std::size_t, 3> n{};
  for (int a = 0; a < 3; ++a) {
    const auto v = static_cast<long long>(c[a]) + d[a];
    if (v < 0 || v >= static_cast<long long>(g.dims[a])) return false;
    n[a] = static_cast<std::size_t>(v);
  }
  j = g.index(n[0], n[1], n[2]);
  return true;
}

// Flood-fill regions of voxels sharing a key (mask foreground, gray level).
template <typename Key>
std::vector<std::vector<std::size_t>> label_regions(const Grid& g, std::span<const std::size_t> seeds,
                                                    const std::vector<Key>& key, const std::vector<std::uint8_t>& inside,
                                                    int connectivity) {
  const auto offsets = neighbour_offsets(connectivity);
  std::vector<std::uint8_t> seen(g.size(), 0);
  std::vector<std::vector<std::size_t>> regions;
  std::deque<std::size_t> queue;
  for (std::size_t s : seeds) {
    if (seen[s]) continue;
    std::vector<std::size_t> region;
    seen[s] = 1;
    queue.push_back(s);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      region.push_back(i);
      for (const auto& d : offsets) {
        std::size_t j;
        if (step(g, i, d, j) && inside[j] && !seen[j] && key[j] == key[i]) {
          seen[j] = 1;
          queue.push_back(j);
        }
      }
    }
    std::sort(region.begin(), region.end());
    regions.push_back(std::move(region));
  }
  return regions;
}

}  // namespace

std::vector<Component> connected_components(const Mask& mask, int connectivity, const Volume* uncertainty) {
  validate(mask.grid);
  if (mask.voxels.size() != mask.grid.size()) throw ShapeError("mask voxel count does not match dims");
  if (uncertainty && uncertainty->voxels.size() != mask.grid.size())
    throw ShapeError("uncertainty map grid does not match mask");
  std::vector<std::size_t> seeds;
  std::vector<std::uint8_t> inside(mask.voxels.size());
  for (std::size_t i = 0; i < mask.voxels.size(); ++i) {
    inside[i] = mask.voxels[i] != 0;
    if (inside[i]) seeds.push_back(i);
  }
  const std::vector<std::uint8_t> key(mask.voxels.size(), 1);
  auto regions = label_regions(mask.grid, seeds, key, inside, connectivity);
  std::stable_sort(regions.begin(), regions.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  std::vector<Component> out;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    Component c;
    c.label = r + 1;
    c.volume_mm3 = static_cast<double>(regions[r].size()) * mask.grid.voxel_volume();
    if (uncertainty) {
      double s = 0.0;
      for (auto i : regions[r]) s += uncertainty->voxels[i];
      c.mean_uncertainty = s / static_cast<double>(regions[r].size());
    }
    c.voxel_indices = std::move(regions[r]);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------- selection

NodeSelection select_primary_node(std::span<const Component> components, double rho, const Volume* uncertainty) {
  if (components.empty()) throw ShapeError("select_primary_node: no components");
  if (!(rho > 0.0 && rho < 1.0)) throw ShapeError("select_primary_node: rho must lie in (0,1)");
  std::vector<std::size_t> order(components.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return components[a].volume_mm3 > components[b].volume_mm3;
  });
  NodeSelection sel;
  sel.index = order[0];
  sel.component = components[order[0]];
  if (components.size() == 1) return sel;

  const double v1 = components[order[0]].volume_mm3, v2 = components[order[1]].volume_mm3;
  if ((v1 - v2) / v1 > rho) return sel;

  sel.ambiguous = true;
  std::vector<double> logs;
  for (const auto& c : components) logs.push_back(std::log(c.volume_mm3));
  const double mean = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(logs.size());
  double ss = 0.0;
  for (double l : logs) ss += (l - mean) * (l - mean);
  const double sd = std::sqrt(ss / static_cast<double>(logs.size() - 1));
  const double top = std::log(v1);
  for (std::size_t k : order)
    if (std::abs(logs[k] - top) <= 2.0 * sd) sel.candidates.push_back(k);
  if (!uncertainty) return sel;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k : sel.candidates) {
    const auto& c = components[k];
    double s = 0.0;
    for (auto i : c.voxel_indices) {
      if (i >= uncertainty->voxels.size()) throw ShapeError("uncertainty map smaller than component grid");
      s += uncertainty->voxels[i];
    }
    const double m = s / static_cast<double>(c.voxel_indices.size());
    if (m < best) {
      best = m;
      sel.index = k;
    }
  }
  sel.component = components[sel.index];
  sel.component.mean_uncertainty = best;
  return sel;
}

// ---------------------------------------------------------------- features

std::string to_string(FeatureFamily family) {
  switch (family) {
    case FeatureFamily::shape: return "shape";
    case FeatureFamily::first_order: return "first_order";
    case FeatureFamily::texture: return "texture";
    case FeatureFamily::combined: return "combined";
  }
  return "?";
}

void FeatureVector::add(std::string name, double value) {
  if (!std::isfinite(value)) throw NumericError("feature '" + name + "' is not finite");
  names.push_back(std::move(name));
  values.push_back(value);
}

double FeatureVector::get(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ShapeError("no feature named '" + name + "'");
  return values[static_cast<std::size_t>(it - names.begin())];
}

void FeatureVector::append(const FeatureVector& other, const std::string& prefix) {
  for (std::size_t i = 0; i < other.size(); ++i) add(prefix + other.names[i], other.values[i]);
}

namespace {

void require_nonempty(const Component& comp) {
  if (comp.voxel_indices.empty()) throw ShapeError("empty component");
}

}  // namespace

FeatureVector extract_shape(const Component& comp, const Grid& grid) {
  require_nonempty(comp);
  validate(grid);
  FeatureVector fv;
  fv.family = FeatureFamily::shape;
  std::vector<std::uint8_t> inside(grid.size(), 0);
  for (auto i : comp.voxel_indices) inside.at(i) = 1;

  const double n = static_cast<double>(comp.voxel_indices.size());
  const double volume = n * grid.voxel_volume();
  const std::array<double, 3> face{grid.spacing[1] * grid.spacing[2], grid.spacing[0] * grid.spacing[2],
                                   grid.spacing[0] * grid.spacing[1]};
  double area = 0.0;
  std::vector<std::array<double, 3>> boundary;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (auto i : comp.voxel_indices) {
    const auto c = grid.coords(i);
    bool on_boundary = false;
    for (int a = 0; a < 3; ++a)
      for (int s : {-1, 1}) {
        std::array<int, 3> d{0, 0, 0};
        d[a] = s;
        std::size_t j;
        if (!step(grid, i, d, j) || !inside[j]) {
          area += face[a];
          on_boundary = true;
        }
      }
    const std::array<double, 3> p{c[0] * grid.spacing[0], c[1] * grid.spacing[1], c[2] * grid.spacing[2]};
    if (on_boundary) boundary.push_back(p);
    mean += Eigen::Vector3d(p[0], p[1], p[2]);
  }
  mean /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : comp.voxel_indices) {
    const auto c = grid.coords(i);
    const Eigen::Vector3d d =
        Eigen::Vector3d(c[0] * grid.spacing[0], c[1] * grid.spacing[1], c[2] * grid.spacing[2]) - mean;
    cov += d * d.transpose();
  }
  cov /= n;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  auto ev = es.eigenvalues();  // ascending
  const double l1 = std::max(ev[2], 0.0), l2 = std::max(ev[1], 0.0), l3 = std::max(ev[0], 0.0);
  const double elongation = l1 > 0.0 ? std::sqrt(l2 / l1) : 1.0;
  const double flatness = l1 > 0.0 ? std::sqrt(l3 / l1) : 1.0;

  double diam2 = 0.0;
  for (std::size_t a = 0; a < boundary.size(); ++a)
    for (std::size_t b = a + 1; b < boundary.size(); ++b) {
      const double dx = boundary[a][0] - boundary[b][0], dy = boundary[a][1] - boundary[b][1],
                   dz = boundary[a][2] - boundary[b][2];
      diam2 = std::max(diam2, dx * dx + dy * dy + dz * dz);
    }

  fv.add("volume_mm3", volume);
  fv.add("surface_area_mm2", area);
  fv.add("sphericity", std::cbrt(36.0 * M_PI * volume * volume) / area);
  fv.add("surface_volume_ratio", area / volume);
  fv.add("elongation", elongation);
  fv.add("flatness", flatness);
  fv.add("max_3d_diameter", std::sqrt(diam2));
  return fv;
}

std::vector<int> discretize(const Volume& vol, const Component& comp, double bin_width) {
  require_nonempty(comp);
  if (!(bin_width > 0.0)) throw ShapeError("bin width must be positive");
  double mn = std::numeric_limits<double>::infinity();
  for (auto i : comp.voxel_indices) mn = std::min(mn, vol.voxels.at(i));
  const double base = std::floor(mn / bin_width);
  std::vector<int> levels;
  levels.reserve(comp.voxel_indices.size());
  for (auto i : comp.voxel_indices)
    levels.push_back(static_cast<int>(std::floor(vol.voxels[i] / bin_width) - base) + 1);
  return levels;
}

FeatureVector extract_first_order(const Volume& vol, const Component& comp, double bin_width) {
  require_nonempty(comp);
  const auto levels = discretize(vol, comp, bin_width);
  FeatureVector fv;
  fv.family = FeatureFamily::first_order;
  const double n = static_cast<double>(comp.voxel_indices.size());
  double mean = 0.0, mn = std::numeric_limits<double>::infinity(), mx = -mn, energy = 0.0;
  for (auto i : comp.voxel_indices) {
    const double x = vol.voxels[i];
    mean += x;
    mn = std::min(mn, x);
    mx = std::max(mx, x);
    energy += x * x;
  }
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (auto i : comp.voxel_indices) {
    const double d = vol.voxels[i] - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  std::map<int, std::size_t> hist;
  for (int l : levels) hist[l]++;
  double entropy = 0.0;
  for (const auto& [level, count] : hist) {
    const double p = static_cast<double>(count) / n;
    entropy -= p * std::log2(p);
  }
  std::vector<double> sorted;
  for (auto i : comp.voxel_indices) sorted.push_back(vol.voxels[i]);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t h = sorted.size() / 2;
  const double median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);

  fv.add("mean", mean);
  fv.add("std", std::sqrt(m2));
  fv.add("skewness", m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0);
  fv.add("kurtosis", m2 > 0.0 ? m4 / (m2 * m2) : 0.0);
  fv.add("min", mn);
  fv.add("max", mx);
  fv.add("median", median);
  fv.add("energy", energy);
  fv.add("entropy", entropy);
  return fv;
}

const std::vector<std::array<int, 3>>& glcm_directions() {
  static const std::vector<std::array<int, 3>> dirs = [] {
    std::vector<std::array<int, 3>> out;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const std::array<int, 3> d{dx, dy, dz};
          // keep the lexicographically positive half of the 26 offsets
          const bool positive = dx > 0 || (dx == 0 && (dy > 0 || (dy == 0 && dz > 0)));
          if (positive) out.push_back(d);
        }
    return out;
  }();
  return dirs;
}

GlcmTables glcm_tables(const Volume& vol, const Component& comp, double bin_width) {
  const auto levels = discretize(vol, comp, bin_width);
  const auto& g = vol.grid;
  std::vector<int> level_of(g.size(), 0);
  for (std::size_t k = 0; k < levels.size(); ++k) level_of[comp.voxel_indices[k]] = levels[k];
  GlcmTables out;
  out.levels = static_cast<std::size_t>(*std::max_element(levels.begin(), levels.end()));
  const std::size_t L = out.levels;
  for (const auto& d : glcm_directions()) {
    std::vector<double> t(L * L, 0.0);
    double total = 0.0;
    for (auto i : comp.voxel_indices) {
      std::size_t j;
      if (!step(g, i, d, j) || level_of[j] == 0) continue;
      const auto a = static_cast<std::size_t>(level_of[i] - 1), b = static_cast<std::size_t>(level_of[j] - 1);
      t[a * L + b] += 1.0;
      t[b * L + a] += 1.0;
      total += 2.0;
    }
    if (total == 0.0) continue;
    for (auto& v : t) v /= total;
    out.tables.push_back(std::move(t));
  }
  return out;
}

FeatureVector extract_texture(const Volume& vol, const Component& comp, double bin_width, int connectivity) {
  require_nonempty(comp);
  if (comp.voxel_indices.size() < 2) throw ShapeError("texture features undefined for a single-voxel component");
  FeatureVector fv;
  fv.family = FeatureFamily::texture;

  const auto glcm = glcm_tables(vol, comp, bin_width);
  const std::size_t L = glcm.levels;
  double joint_entropy = 0.0, contrast = 0.0, correlation = 0.0, energy = 0.0;
  for (const auto& t : glcm.tables) {
    double je = 0.0, con = 0.0, en = 0.0, mu = 0.0;
    for (std::size_t a = 0; a < L; ++a)
      for (std::size_t b = 0; b < L; ++b) {
        const double p = t[a * L + b];
        if (p <= 0.0) continue;
        je -= p * std::log2(p);
        con += (static_cast<double>(a) - static_cast<double>(b)) * (static_cast<double>(a) - static_cast<double>(b)) * p;
        en += p * p;
        mu += static_cast<double>(a + 1) * p;
      }
    double var = 0.0, cov = 0.0;
    for (std::size_t a = 0; a < L; ++a)
      for (std::size_t b = 0; b < L; ++b) {
        const double p = t[a * L + b];
        if (p <= 0.0) continue;
        const double da = static_cast<double>(a + 1) - mu, db = static_cast<double>(b + 1) - mu;
        var += da * da * p;
        cov += da * db * p;
      }
    joint_entropy += je;
    contrast += con;
    energy += en;
    correlation += var > 1e-15 ? cov / var : 1.0;
  }
  const double nd = static_cast<double>(glcm.tables.size());
  if (nd == 0.0) throw ShapeError("texture features undefined: component has no neighbouring voxel pairs");
  fv.add("glcm_joint_entropy", joint_entropy / nd);
  fv.add("glcm_contrast", contrast / nd);
  fv.add("glcm_correlation", correlation / nd);
  fv.add("glcm_joint_energy", energy / nd);

  // GLSZM: zones are connected runs of equal gray level inside the component.
  const auto levels = discretize(vol, comp, bin_width);
  const auto& g = vol.grid;
  std::vector<int> level_of(g.size(), 0);
  std::vector<std::uint8_t> inside(g.size(), 0);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    level_of[comp.voxel_indices[k]] = levels[k];
    inside[comp.voxel_indices[k]] = 1;
  }
  const auto zones = label_regions(g, comp.voxel_indices, level_of, inside, connectivity);
  std::map<int, double> by_level;
  std::map<std::size_t, double> by_size;
  std::map<std::pair<int, std::size_t>, double> joint;
  for (const auto& z : zones) {
    const int l = level_of[z.front()];
    by_level[l] += 1.0;
    by_size[z.size()] += 1.0;
    joint[{l, z.size()}] += 1.0;
  }
  const double nz = static_cast<double>(zones.size());
  double gln = 0.0, szn = 0.0, ze = 0.0;
  for (const auto& [l, c] : by_level) gln += c * c;
  for (const auto& [s, c] : by_size) szn += c * c;
  for (const auto& [k, c] : joint) ze -= (c / nz) * std::log2(c / nz);
  fv.add("glszm_gray_level_non_uniformity", gln / nz);
  fv.add("glszm_size_zone_non_uniformity", szn / nz);
  fv.add("glszm_zone_entropy", ze);
  fv.add("glszm_zone_percentage", nz / static_cast<double>(comp.voxel_indices.size()));
  return fv;
}

FeatureVector extract_region(const Volume& vol, const Component& comp, const FeatureOptions& options) {
  FeatureVector fv;
  fv.append(extract_shape(comp, vol.grid));
  fv.append(extract_first_order(vol, comp, options.bin_width));
  fv.append(extract_texture(vol, comp, options.bin_width, options.connectivity));
  return fv;
}

std::vector<std::string> region_feature_names() {
  Volume v;
  v.grid.dims = {2, 2, 2};
  v.voxels = {0, 10, 20, 30, 40, 50, 60, 70};
  Component c;
  c.voxel_indices = {0, 1, 2, 3, 4, 5, 6, 7};
  return extract_region(v, c, {}).names;
}

PatientFeatures extract_patient_features(const Volume& ct, const Mask& nodal, const Mask& primary,
                                         const Volume* uncertainty, const FeatureOptions& options) {
  if (!(ct.grid == nodal.grid) || !(ct.grid == primary.grid)) throw ShapeError("CT and mask grids differ");
  if (uncertainty && !(uncertainty->grid == ct.grid)) throw ShapeError("uncertainty grid differs from CT");
  Volume vol = options.resample ? resample_isotropic(ct) : ct;
  Mask nod = options.resample ? resample_isotropic(nodal) : nodal;
  Mask pri = options.resample ? resample_isotropic(primary) : primary;
  std::optional<Volume> unc;
  if (uncertainty) unc = options.resample ? resample_isotropic(*uncertainty) : *uncertainty;

  PatientFeatures out;
  const auto nodes = connected_components(nod, options.connectivity, unc ? &*unc : nullptr);
  if (nodes.empty()) throw ShapeError("nodal mask is empty");
  out.nodal_components = nodes.size();
  out.selection = select_primary_node(nodes, options.rho, unc ? &*unc : nullptr);
  out.nodal = extract_region(vol, out.selection.component, options);
  out.nodal.family = FeatureFamily::combined;

  const auto tumours = connected_components(pri, options.connectivity);
  if (tumours.empty()) throw ShapeError("primary mask is empty");
  out.primary = extract_region(vol, tumours.front(), options);
  out.primary.family = FeatureFamily::combined;
  return out;
}

}  // namespace amoene
