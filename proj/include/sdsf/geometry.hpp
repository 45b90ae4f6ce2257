#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sdsf/tensor.hpp"

namespace sdsf {

// Axis-aligned tetrahedral grid over the cube [-l, l]^3. Each cell is split
// into six tets around the main diagonal (Kuhn subdivision), which matches
// across neighboring cells, so the extracted surface is watertight.
struct TetGrid {
  std::size_t resolution = 32;  // cells per axis
  double l = 0.5;
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<std::uint32_t, 4>> tets;  // positively oriented

  static TetGrid make(std::size_t resolution, double l = 0.5);
  double spacing() const { return 2.0 * l / static_cast<double>(resolution); }
  std::size_t vertex_count() const { return vertices.size(); }
};

// Optimizable surface parameters on a TetGrid. Deformations are stored raw
// and squashed through tanh so the per-axis offset stays strictly below the
// inversion threshold of the cell split, for any parameter value.
struct TetField {
  Tensor sdf;         // [V]
  Tensor deform_raw;  // [V,3]

  // grid vertices + 0.15 * spacing * tanh(deform_raw), as a graph op
  Tensor deformed_positions(const TetGrid& grid) const;
};

TetField init_sphere(const TetGrid& grid, double radius);

struct TriangleMesh {
  Tensor positions;  // [M,3]
  std::vector<std::array<std::uint32_t, 3>> faces;
  Tensor normals;  // [M,3], unit rows; filled by vertex_normals
  std::vector<std::array<double, 2>> uvs;

  bool empty() const { return faces.empty(); }
  std::size_t vertex_count() const { return positions.defined() ? positions.dim(0) : 0; }
};

// Extracts the sdf zero level set. Crossing positions are linear in the
// endpoint sdf values and positions, and gradients flow back to both.
// Triangles wind so normals point toward positive sdf.
TriangleMesh marching_tets(const TetField& field, const TetGrid& grid);

// Area-weighted average of incident face normals, renormalized.
// Throws if some vertex has only degenerate faces.
void vertex_normals(TriangleMesh& mesh);

struct ManifoldReport {
  std::size_t edges = 0;
  std::size_t boundary_edges = 0;     // on exactly 1 face
  std::size_t nonmanifold_edges = 0;  // on 3+ faces
  bool watertight() const { return boundary_edges == 0 && nonmanifold_edges == 0; }
};
ManifoldReport manifold_report(const TriangleMesh& mesh);

void save_obj(const std::string& path, const TriangleMesh& mesh);

}  // namespace sdsf
