#include "amoene/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace amoene {

static_assert(std::endian::native == std::endian::little, "volume files assume a little-endian host");

namespace {

using nlohmann::json;

void write_sidecar(const std::filesystem::path& sidecar, const Grid& grid, const char* dtype,
                   const std::filesystem::path& raw) {
  json j;
  j["dims"] = grid.dims;
  j["spacing_mm"] = grid.spacing;
  j["dtype"] = dtype;
  j["order"] = "row-major little-endian";
  j["data_file"] = raw.filename().string();
  std::ofstream out(sidecar);
  if (!out) throw ConfigError("cannot write " + sidecar.string());
  out << j.dump(2) << "\n";
}

std::filesystem::path raw_path(const std::filesystem::path& sidecar) {
  auto raw = sidecar;
  raw.replace_extension(".raw");
  return raw;
}

struct Header {
  Grid grid;
  std::string dtype;
  std::filesystem::path data;
};

Header read_sidecar(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw ConfigError("cannot open " + sidecar.string());
  Header h;
  try {
    const json j = json::parse(in);
    h.grid.dims = j.at("dims").get<Dims>();
    h.grid.spacing = j.at("spacing_mm").get<Spacing>();
    h.dtype = j.at("dtype").get<std::string>();
    if (j.value("order", std::string("row-major little-endian")) != "row-major little-endian")
      throw ConfigError("unsupported voxel order in " + sidecar.string());
    h.data = sidecar.parent_path() / j.value("data_file", raw_path(sidecar).filename().string());
  } catch (const json::exception& e) {
    throw ConfigError("malformed volume sidecar " + sidecar.string() + ": " + e.what());
  }
  validate(h.grid);
  return h;
}

std::vector<char> read_raw(const std::filesystem::path& p, std::size_t bytes) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::vector<char> buf(bytes);
  in.read(buf.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes || in.peek() != EOF)
    throw ShapeError("voxel file " + p.string() + " does not match sidecar dims");
  return buf;
}

}  // namespace

void write_volume(const std::filesystem::path& sidecar, const Volume& vol) {
  validate(vol.grid);
  if (vol.voxels.size() != vol.grid.size()) throw ShapeError("volume voxel count does not match dims");
  const auto raw = raw_path(sidecar);
  std::vector<float> f(vol.voxels.begin(), vol.voxels.end());
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  write_sidecar(sidecar, vol.grid, "f32", raw);
}

void write_mask(const std::filesystem::path& sidecar, const Mask& mask) {
  validate(mask.grid);
  if (mask.voxels.size() != mask.grid.size()) throw ShapeError("mask voxel count does not match dims");
  const auto raw = raw_path(sidecar);
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(mask.voxels.data()), static_cast<std::streamsize>(mask.voxels.size()));
  write_sidecar(sidecar, mask.grid, "u8", raw);
}

Volume read_volume(const std::filesystem::path& sidecar) {
  const auto h = read_sidecar(sidecar);
  if (h.dtype != "f32") throw ConfigError("expected dtype f32 in " + sidecar.string());
  const auto buf = read_raw(h.data, h.grid.size() * sizeof(float));
  std::vector<float> f(h.grid.size());
  std::memcpy(f.data(), buf.data(), buf.size());
  Volume v;
  v.grid = h.grid;
  v.voxels.assign(f.begin(), f.end());
  return v;
}

Mask read_mask(const std::filesystem::path& sidecar) {
  const auto h = read_sidecar(sidecar);
  if (h.dtype != "u8") throw ConfigError("expected dtype u8 in " + sidecar.string());
  const auto buf = read_raw(h.data, h.grid.size());
  Mask m;
  m.grid = h.grid;
  m.voxels.assign(buf.begin(), buf.end());
  for (auto& v : m.voxels)
    if (v > 1) throw ShapeError("mask voxels must be 0 or 1");
  return m;
}

}  // namespace amoene
