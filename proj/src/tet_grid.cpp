#include <cmath>
#include <stdexcept>

#include "sdsf/geometry.hpp"

namespace sdsf {

namespace {
double signed_volume(const std::array<double, 3>& a, const std::array<double, 3>& b,
                     const std::array<double, 3>& c, const std::array<double, 3>& d) {
  const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const double w[3] = {d[0] - a[0], d[1] - a[1], d[2] - a[2]};
  return u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) +
         u[2] * (v[0] * w[1] - v[1] * w[0]);
}
}  // namespace

TetGrid TetGrid::make(std::size_t resolution, double l) {
  if (resolution < 2) throw std::invalid_argument("TetGrid: resolution must be at least 2");
  if (l <= 0.0) throw std::invalid_argument("TetGrid: l must be positive");
  TetGrid g;
  g.resolution = resolution;
  g.l = l;
  const std::size_t n = resolution + 1;
  g.vertices.reserve(n * n * n);
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        g.vertices.push_back({-l + 2.0 * l * static_cast<double>(x) / resolution,
                              -l + 2.0 * l * static_cast<double>(y) / resolution,
                              -l + 2.0 * l * static_cast<double>(z) / resolution});
  auto vid = [n](std::size_t x, std::size_t y, std::size_t z) {
    return static_cast<std::uint32_t>((z * n + y) * n + x);
  };
  // Six tets per cell: (corner0, corner0+e_i, corner0+e_i+e_j, corner7) for
  // each axis order, all sharing the main diagonal.
  static const int kPath[6][2] = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  g.tets.reserve(6 * resolution * resolution * resolution);
  for (std::size_t z = 0; z < resolution; ++z)
    for (std::size_t y = 0; y < resolution; ++y)
      for (std::size_t x = 0; x < resolution; ++x) {
        const std::size_t c[3] = {x, y, z};
        const std::uint32_t v0 = vid(x, y, z);
        const std::uint32_t v7 = vid(x + 1, y + 1, z + 1);
        for (const auto& p : kPath) {
          std::size_t a[3] = {c[0], c[1], c[2]};
          a[p[0]] += 1;
          std::size_t b[3] = {a[0], a[1], a[2]};
          b[p[1]] += 1;
          std::array<std::uint32_t, 4> tet = {v0, vid(a[0], a[1], a[2]), vid(b[0], b[1], b[2]),
                                              v7};
          if (signed_volume(g.vertices[tet[0]], g.vertices[tet[1]], g.vertices[tet[2]],
                            g.vertices[tet[3]]) < 0.0)
            std::swap(tet[1], tet[2]);
          g.tets.push_back(tet);
        }
      }
  return g;
}

Tensor TetField::deformed_positions(const TetGrid& grid) const {
  std::vector<double> base;
  base.reserve(grid.vertices.size() * 3);
  for (const auto& v : grid.vertices) {
    base.push_back(v[0]);
    base.push_back(v[1]);
    base.push_back(v[2]);
  }
  Tensor base_t = Tensor::from_data({grid.vertices.size(), 3}, std::move(base));
  // The six-tet cell split inverts once a vertex moves spacing/6 per axis
  // (adversarial case), so the squash amplitude stays below that.
  const double amp = 0.15 * grid.spacing();
  return add(base_t, mul(ttanh(deform_raw), amp));
}

TetField init_sphere(const TetGrid& grid, double radius) {
  if (radius <= 0.0 || radius >= grid.l)
    throw std::invalid_argument("init_sphere: radius " + std::to_string(radius) +
                                " outside (0, " + std::to_string(grid.l) + ")");
  TetField f;
  std::vector<double> sdf;
  sdf.reserve(grid.vertices.size());
  for (const auto& v : grid.vertices)
    sdf.push_back(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - radius);
  f.sdf = Tensor::from_data({grid.vertices.size()}, std::move(sdf), true);
  f.deform_raw = Tensor::zeros({grid.vertices.size(), 3}, true);
  return f;
}

}  // namespace sdsf
