#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "ccsnet/error.hpp"
#include "ccsnet/rng.hpp"

namespace ccsnet::geom {

enum class Material : std::uint8_t { Rock = 0, Shale = 1 };

struct DomainSpec {
  double width = 100.0;  // m
  double depth = 50.0;   // m
  int raster_w = 96;
  int raster_h = 48;

  void validate() const {
    if (!(width > 0.0) || !(depth > 0.0))
      throw GeometryError("domain width and depth must be positive");
    if (raster_w <= 0 || raster_h <= 0 || raster_w % 16 != 0 || raster_h % 16 != 0)
      throw GeometryError("raster size " + std::to_string(raster_w) + "x" +
                          std::to_string(raster_h) + " must be positive multiples of 16");
  }
};

/// Shale band of fixed thickness. At zero dip the band's top sits
/// depth_to_top below the surface; the band is then rotated clockwise about
/// the domain center, so positive dip descends to the right.
struct LayerSpec {
  double dip_deg = 0.0;
  double thickness = 8.0;      // m
  double depth_to_top = 20.0;  // m

  void validate(const DomainSpec& domain) const {
    if (!(dip_deg >= 0.0 && dip_deg <= 45.0))
      throw GeometryError("dip angle " + std::to_string(dip_deg) + " outside [0, 45] degrees");
    if (!(thickness > 0.0))
      throw GeometryError("layer thickness must be positive");
    if (!(depth_to_top > 0.0) || !(depth_to_top + thickness < domain.depth))
      throw GeometryError("shale band lies outside the domain");
  }
};

/// Signed test for the rotated band. Returns true iff (x, y) lies inside.
/// Coordinates: x to the right, y upward, origin at the bottom-left corner.
inline bool inside_band(const DomainSpec& domain, const LayerSpec& layer, double x, double y) {
  const double cx = 0.5 * domain.width;
  const double cy = 0.5 * domain.depth;
  const double a = layer.dip_deg * std::numbers::pi / 180.0;
  // Undo the clockwise rotation of the band by rotating the point counterclockwise.
  const double dx = x - cx;
  const double dy = y - cy;
  const double yr = cy + std::sin(a) * dx + std::cos(a) * dy;
  const double top = domain.depth - layer.depth_to_top;
  const double bottom = top - layer.thickness;
  return yr >= bottom && yr <= top;
}

struct MaterialField {
  int raster_w = 0;
  int raster_h = 0;
  /// Row-major, row 0 is the ground surface.
  std::vector<std::uint8_t> classes;
  int mesh_nx = 0;
  int mesh_ny = 0;
  /// Row-major by element, row 0 is the bottom row of the mesh.
  std::vector<std::uint8_t> element_classes;

  std::uint8_t pixel(int row, int col) const {
    return classes[static_cast<std::size_t>(row) * raster_w + col];
  }
  std::size_t count(Material m) const {
    std::size_t n = 0;
    for (auto c : classes) n += (c == static_cast<std::uint8_t>(m));
    return n;
  }
};

/// Draws n dip angles i.i.d. uniform on [0, 45] degrees.
inline std::vector<double> sample_dip_angles(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ArgumentError("empty request: at least one dip angle must be sampled");
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& d : out) d = 45.0 * rng.uniform();
  return out;
}

/// Classifies raster pixels and FEM elements by whether their centers fall in
/// the shale band.
inline MaterialField rasterize(const DomainSpec& domain, const LayerSpec& layer, int mesh_nx = 48,
                               int mesh_ny = 24) {
  domain.validate();
  layer.validate(domain);
  if (mesh_nx < 1 || mesh_ny < 1) throw ArgumentError("mesh resolution must be positive");
  MaterialField f;
  f.raster_w = domain.raster_w;
  f.raster_h = domain.raster_h;
  f.classes.resize(static_cast<std::size_t>(f.raster_w) * f.raster_h);
  const double px = domain.width / f.raster_w;
  const double py = domain.depth / f.raster_h;
  for (int r = 0; r < f.raster_h; ++r) {
    const double y = domain.depth - (r + 0.5) * py;
    for (int c = 0; c < f.raster_w; ++c) {
      const double x = (c + 0.5) * px;
      f.classes[static_cast<std::size_t>(r) * f.raster_w + c] =
          inside_band(domain, layer, x, y) ? 1 : 0;
    }
  }
  f.mesh_nx = mesh_nx;
  f.mesh_ny = mesh_ny;
  f.element_classes.resize(static_cast<std::size_t>(mesh_nx) * mesh_ny);
  const double ex = domain.width / mesh_nx;
  const double ey = domain.depth / mesh_ny;
  for (int j = 0; j < mesh_ny; ++j)
    for (int i = 0; i < mesh_nx; ++i)
      f.element_classes[static_cast<std::size_t>(j) * mesh_nx + i] =
          inside_band(domain, layer, (i + 0.5) * ex, (j + 0.5) * ey) ? 1 : 0;

  const std::size_t shale = f.count(Material::Shale);
  if (shale == 0 || shale == f.classes.size())
    throw GeometryError("band does not split the domain into two materials at dip " +
                        std::to_string(layer.dip_deg));
  return f;
}

/// Channel-first 3-channel image with values in [0, 1].
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int ch, int row, int col) const {
    return data[(static_cast<std::size_t>(ch) * height + row) * width + col];
  }
};

/// Shale -> (1, 0, 0), rock -> (0, 1, 0).
inline Image to_input_image(const MaterialField& field) {
  Image img;
  img.height = field.raster_h;
  img.width = field.raster_w;
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  img.data.assign(3 * plane, 0.0f);
  for (std::size_t k = 0; k < plane; ++k) {
    if (field.classes[k] == static_cast<std::uint8_t>(Material::Shale))
      img.data[k] = 1.0f;
    else
      img.data[plane + k] = 1.0f;
  }
  return img;
}

/// Inverse of to_input_image: argmax over channels (ties resolve to rock).
inline std::vector<std::uint8_t> classes_from_image(const Image& img) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  std::vector<std::uint8_t> out(plane);
  for (std::size_t k = 0; k < plane; ++k) {
    const float s = img.data[k];
    const float r = img.data[plane + k];
    const float z = img.data[2 * plane + k];
    out[k] = (s > r && s >= z) ? 1 : 0;
  }
  return out;
}

struct MaterialProperties {
  double youngs_modulus;   // Pa
  double poisson_ratio;
  double permeability;     // m^2
  double fluid_viscosity;  // Pa s
  double density = 2500.0; // kg/m^3, only used when gravity is enabled

  double shear_modulus() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
  /// E(1-nu)/((1+nu)(1-2nu))
  double constrained_modulus() const {
    const double nu = poisson_ratio;
    return youngs_modulus * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu));
  }
  double mobility() const { return permeability / fluid_viscosity; }
};

class MaterialRegistry {
 public:
  MaterialRegistry() = default;
  MaterialRegistry(MaterialProperties rock, MaterialProperties shale) {
    props_[0] = rock;
    props_[1] = shale;
    validate();
  }

  /// Rock: E=10 GPa, nu=0.25. Shale: E=2 GPa, nu=0.3. Permeabilities are
  /// 4e-19 m^2 (rock) and 1e-21 m^2 (shale) so that consolidation of the
  /// 50 m column spans a multi-year horizon.
  static MaterialRegistry defaults() {
    return MaterialRegistry({10e9, 0.25, 4e-19, 1e-3}, {2e9, 0.3, 1e-21, 1e-3});
  }

  static MaterialRegistry homogeneous(const MaterialProperties& p) {
    MaterialRegistry r;
    r.props_[0] = p;
    r.props_[1] = p;
    r.check_each();
    return r;
  }

  const MaterialProperties& get(std::uint8_t material_class) const {
    auto it = props_.find(material_class);
    if (it == props_.end())
      throw RegistryError("unknown material class " + std::to_string(material_class));
    return it->second;
  }

  void set(std::uint8_t material_class, const MaterialProperties& p) { props_[material_class] = p; }

  /// Scales every permeability by the given factor.
  MaterialRegistry with_permeability_scale(double factor) const {
    MaterialRegistry r = *this;
    for (auto& [k, p] : r.props_) p.permeability *= factor;
    return r;
  }

  void validate() const {
    check_each();
    const auto& rock = get(0);
    const auto& shale = get(1);
    if (!(shale.permeability < rock.permeability))
      throw RegistryError("shale permeability must be below rock permeability");
    if (!(shale.youngs_modulus < rock.youngs_modulus))
      throw RegistryError("shale stiffness must be below rock stiffness");
  }

 private:
  void check_each() const {
    for (const auto& [k, p] : props_) {
      const std::string tag = "material " + std::to_string(k) + ": ";
      if (!(p.youngs_modulus > 0.0)) throw RegistryError(tag + "Young's modulus must be positive");
      if (!(p.poisson_ratio > 0.0 && p.poisson_ratio < 0.5))
        throw RegistryError(tag + "Poisson ratio must lie in (0, 0.5)");
      if (!(p.permeability > 0.0)) throw RegistryError(tag + "permeability must be positive");
      if (!(p.fluid_viscosity > 0.0)) throw RegistryError(tag + "viscosity must be positive");
    }
  }

  std::map<std::uint8_t, MaterialProperties> props_;
};

}  // namespace ccsnet::geom
