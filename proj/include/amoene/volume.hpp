#pragma once

// 3D volumes, connected components, the nodal component-selection rule and
// a radiomics-lite feature extractor (shape, first-order, GLCM, GLSZM).

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amoene/error.hpp"

namespace amoene {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

// Row-major (x, y, z): z varies fastest.
struct Grid {
  Dims dims{0, 0, 0};
  Spacing spacing{1.0, 1.0, 1.0};

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return (x * dims[1] + y) * dims[2] + z; }
  std::array<std::size_t, 3> coords(std::size_t i) const {
    return {i / (dims[1] * dims[2]), (i / dims[2]) % dims[1], i % dims[2]};
  }
  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }
  bool operator==(const Grid&) const = default;
};

void validate(const Grid& grid);

struct Volume {
  Grid grid;
  std::vector<double> voxels;  // HU
};

struct Mask {
  Grid grid;
  std::vector<std::uint8_t> voxels;  // 0/1
};

Volume resample_isotropic(const Volume& vol);
Mask resample_isotropic(const Mask& mask);
// Trilinear intensities, nearest-neighbour labels, 1 mm output spacing with
// dims = ceil(dims * spacing).
std::pair<Volume, Mask> resample_isotropic(const Volume& vol, const Mask& mask);

struct Component {
  std::size_t label = 0;  // 1-based rank by volume
  std::vector<std::size_t> voxel_indices;  // sorted
  double volume_mm3 = 0.0;
  double mean_uncertainty = 0.0;
};

// Labels foreground voxels with 6-, 18- or 26-connectivity, ordered by
// volume descending (ties by lowest voxel index). When an uncertainty map on
// the same grid is supplied, mean_uncertainty is filled in.
std::vector<Component> connected_components(const Mask& mask, int connectivity = 26,
                                            const Volume* uncertainty = nullptr);

struct NodeSelection {
  Component component;
  std::size_t index = 0;           // position in the input list
  bool ambiguous = false;          // runner-up within rho of the largest
  std::vector<std::size_t> candidates;  // positions considered in the tie-break
};

inline constexpr double kDefaultRho = 0.40;

// Picks the primary nodal component. If (v1 - v2) / v1 > rho the largest
// wins outright. Otherwise every component whose log-volume lies within two
// sample SDs (over all components of the case) of the largest's log-volume
// is a candidate, and the one with the lowest mean uncertainty wins. Without
// an uncertainty map the largest is returned with ambiguous = true.
NodeSelection select_primary_node(std::span<const Component> components, double rho = kDefaultRho,
                                  const Volume* uncertainty = nullptr);

enum class FeatureFamily { shape, first_order, texture, combined };

std::string to_string(FeatureFamily family);

struct FeatureVector {
  FeatureFamily family = FeatureFamily::combined;
  std::vector<std::string> names;
  std::vector<double> values;

  void add(std::string name, double value);
  double get(const std::string& name) const;
  void append(const FeatureVector& other, const std::string& prefix = "");
  std::size_t size() const { return values.size(); }
};

inline constexpr double kDefaultBinWidth = 10.0;

FeatureVector extract_shape(const Component& comp, const Grid& grid);
FeatureVector extract_first_order(const Volume& vol, const Component& comp, double bin_width = kDefaultBinWidth);
FeatureVector extract_texture(const Volume& vol, const Component& comp, double bin_width = kDefaultBinWidth,
                              int connectivity = 26);

// Gray level per component voxel: floor(x/w) - floor(min/w) + 1.
std::vector<int> discretize(const Volume& vol, const Component& comp, double bin_width);

// The 13 unique 3D neighbour offsets used for co-occurrence.
const std::vector<std::array<int, 3>>& glcm_directions();

// Symmetric, normalized co-occurrence tables (levels x levels) for each
// direction that has at least one voxel pair; used directly by tests.
struct GlcmTables {
  std::size_t levels = 0;
  std::vector<std::vector<double>> tables;
};

GlcmTables glcm_tables(const Volume& vol, const Component& comp, double bin_width);

struct FeatureOptions {
  double rho = kDefaultRho;
  double bin_width = kDefaultBinWidth;
  int connectivity = 26;
  bool resample = true;
};

struct PatientFeatures {
  FeatureVector nodal;
  FeatureVector primary;
  NodeSelection selection;
  std::size_t nodal_components = 0;
};

FeatureVector extract_region(const Volume& vol, const Component& comp, const FeatureOptions& options);

// Resample, label, select the primary node and extract every family for
// both the nodal and primary-tumour masks.
PatientFeatures extract_patient_features(const Volume& ct, const Mask& nodal, const Mask& primary,
                                         const Volume* uncertainty, const FeatureOptions& options = {});

// Column names emitted by extract_region, in order.
std::vector<std::string> region_feature_names();

}  // namespace amoene
