#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "sdsf/geometry.hpp"

using namespace sdsf;

namespace {

double signed_volume(const std::array<double, 3>& a, const std::array<double, 3>& b,
                     const std::array<double, 3>& c, const std::array<double, 3>& d) {
  const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const double w[3] = {d[0] - a[0], d[1] - a[1], d[2] - a[2]};
  return u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) +
         u[2] * (v[0] * w[1] - v[1] * w[0]);
}

// A field over a tiny 2-cell grid whose first tet gets the given sdf signs;
// easier: craft a single-tet extraction by assigning signs to one tet of a
// minimal grid and +1 everywhere else would disturb neighbors, so instead
// drive marching_tets through a grid where only the target tet mixes signs.
TetField constant_field(const TetGrid& g, double v) {
  TetField f;
  f.sdf = Tensor::full({g.vertex_count()}, v, true);
  f.deform_raw = Tensor::zeros({g.vertex_count(), 3}, true);
  return f;
}

std::array<double, 3> face_normal(const TriangleMesh& m, std::size_t fi) {
  const double* pv = m.positions.value().data();
  const auto& f = m.faces[fi];
  const double* a = pv + f[0] * 3;
  const double* b = pv + f[1] * 3;
  const double* c = pv + f[2] * 3;
  const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  return {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
}

}  // namespace

TEST_CASE("grid spans the cube and tets are positively oriented") {
  TetGrid g = TetGrid::make(4, 0.5);
  CHECK(g.vertices.size() == 125);
  CHECK(g.tets.size() == 6 * 64);
  double lo = 1e9, hi = -1e9;
  for (const auto& v : g.vertices)
    for (double c : v) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  CHECK(lo == -0.5);
  CHECK(hi == 0.5);
  for (const auto& t : g.tets) {
    for (auto i : t) CHECK(i < g.vertices.size());
    CHECK(signed_volume(g.vertices[t[0]], g.vertices[t[1]], g.vertices[t[2]],
                        g.vertices[t[3]]) > 0.0);
  }
}

TEST_CASE("init_sphere sdf values") {
  TetGrid g = TetGrid::make(4, 0.5);
  TetField f = init_sphere(g, 0.35);
  // center vertex exists on even grids
  std::size_t center = 0;
  bool found = false;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    const auto& v = g.vertices[i];
    if (v[0] == 0.0 && v[1] == 0.0 && v[2] == 0.0) {
      center = i;
      found = true;
    }
  }
  REQUIRE(found);
  CHECK(f.sdf.at(center) == doctest::Approx(-0.35));
  // corner vertex
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    const auto& v = g.vertices[i];
    if (v[0] == 0.5 && v[1] == 0.5 && v[2] == 0.5)
      CHECK(f.sdf.at(i) == doctest::Approx(std::sqrt(0.75) - 0.35).epsilon(1e-12));
  }
  CHECK_THROWS(init_sphere(g, 0.6));
  CHECK_THROWS(init_sphere(g, -0.1));
}

TEST_CASE("lone negative interior vertex gives a closed cap, one triangle per tet") {
  TetGrid g = TetGrid::make(2, 0.5);
  TetField f = constant_field(g, 1.0);
  // center of the 3x3x3 vertex lattice
  std::size_t center = 0;
  for (std::size_t i = 0; i < g.vertices.size(); ++i)
    if (g.vertices[i][0] == 0.0 && g.vertices[i][1] == 0.0 && g.vertices[i][2] == 0.0) center = i;
  f.sdf.value_mut()[center] = -1.0;
  TriangleMesh mesh = marching_tets(f, g);
  CHECK_FALSE(mesh.empty());
  // every tet containing the lone negative vertex has sign pattern
  // (-,+,+,+) and emits exactly 1 triangle; the center vertex sits in 24
  // tets of this grid
  CHECK(mesh.faces.size() == 24);
  ManifoldReport rep = manifold_report(mesh);
  CHECK(rep.watertight());
  // all faces point away from the negative center (outward = positive side)
  vertex_normals(mesh);
  const double* pv = mesh.positions.value().data();
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    auto n = face_normal(mesh, i);
    const auto& fc = mesh.faces[i];
    double c[3] = {0, 0, 0};
    for (int k = 0; k < 3; ++k)
      for (int d = 0; d < 3; ++d) c[d] += pv[fc[k] * 3 + d] / 3.0;
    CHECK(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] > 0.0);
  }
}

TEST_CASE("lone negative grid corner gives an open cap at the domain boundary") {
  TetGrid g = TetGrid::make(2, 0.5);
  TetField f = constant_field(g, 1.0);
  f.sdf.value_mut()[0] = -1.0;
  TriangleMesh mesh = marching_tets(f, g);
  CHECK_FALSE(mesh.empty());
  ManifoldReport rep = manifold_report(mesh);
  CHECK(rep.nonmanifold_edges == 0);
  CHECK(rep.boundary_edges > 0);
}

TEST_CASE("tet case triangle counts") {
  // one mixed tet in isolation via a 2-cell grid is impossible; instead
  // verify counts through the public interface: a plane cutting the grid
  // yields tets of both the 1-triangle and 2-triangle classes and the total
  // must tile a watertight surface.
  TetGrid g = TetGrid::make(3, 0.5);
  TetField f = constant_field(g, 0.0);
  auto vals = f.sdf.value_mut();
  for (std::size_t i = 0; i < g.vertices.size(); ++i) vals[i] = g.vertices[i][2] - 0.1234;
  TriangleMesh mesh = marching_tets(f, g);
  REQUIRE_FALSE(mesh.empty());
  ManifoldReport rep = manifold_report(mesh);
  CHECK(rep.nonmanifold_edges == 0);
  // plane cut is open at the grid boundary: boundary edges exist
  CHECK(rep.boundary_edges > 0);
  // every triangle normal points up (+z = positive sdf side)
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) CHECK(face_normal(mesh, i)[2] > 0.0);
  // all crossing z match the plane height
  const double* pv = mesh.positions.value().data();
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
    CHECK(pv[i * 3 + 2] == doctest::Approx(0.1234).epsilon(1e-9));
}

TEST_CASE("sphere extraction watertight with radii near 0.35") {
  TetGrid g = TetGrid::make(16, 0.5);
  TetField f = init_sphere(g, 0.35);
  TriangleMesh mesh = marching_tets(f, g);
  REQUIRE_FALSE(mesh.empty());
  CHECK(manifold_report(mesh).watertight());
  const double* pv = mesh.positions.value().data();
  const double h = g.spacing();
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const double r = std::sqrt(pv[i * 3] * pv[i * 3] + pv[i * 3 + 1] * pv[i * 3 + 1] +
                               pv[i * 3 + 2] * pv[i * 3 + 2]);
    CHECK(std::abs(r - 0.35) < h);
  }
}

TEST_CASE("empty field flagged") {
  TetGrid g = TetGrid::make(4, 0.5);
  TetField f = constant_field(g, 1.0);
  TriangleMesh mesh = marching_tets(f, g);
  CHECK(mesh.empty());
}

TEST_CASE("sign flip reverses winding") {
  TetGrid g = TetGrid::make(6, 0.5);
  TetField f = init_sphere(g, 0.3);
  TriangleMesh a = marching_tets(f, g);
  TetField fneg;
  fneg.sdf = neg(f.sdf);
  fneg.deform_raw = f.deform_raw;
  TriangleMesh b = marching_tets(fneg, g);
  REQUIRE(a.faces.size() == b.faces.size());
  REQUIRE(a.vertex_count() == b.vertex_count());

  // crossing vertices come out in a different order; match them by position
  auto key = [](const double* p) {
    return std::to_string(std::llround(p[0] * 1e9)) + "," +
           std::to_string(std::llround(p[1] * 1e9)) + "," + std::to_string(std::llround(p[2] * 1e9));
  };
  const double* apv = a.positions.value().data();
  const double* bpv = b.positions.value().data();
  std::map<std::string, std::uint32_t> b_index;
  for (std::size_t i = 0; i < b.vertex_count(); ++i) b_index[key(bpv + i * 3)] = i;

  std::map<std::array<std::uint32_t, 3>, std::size_t> b_faces;
  for (std::size_t j = 0; j < b.faces.size(); ++j) {
    auto fb = b.faces[j];
    std::sort(fb.begin(), fb.end());
    b_faces[fb] = j;
  }
  for (std::size_t i = 0; i < a.faces.size(); ++i) {
    // translate a's face into b's vertex numbering
    std::array<std::uint32_t, 3> fa_in_b;
    for (int k = 0; k < 3; ++k) {
      auto it = b_index.find(key(apv + a.faces[i][k] * 3));
      REQUIRE(it != b_index.end());
      fa_in_b[k] = it->second;
    }
    auto sorted = fa_in_b;
    std::sort(sorted.begin(), sorted.end());
    auto match = b_faces.find(sorted);
    REQUIRE(match != b_faces.end());
    auto na = face_normal(a, i);
    auto nb = face_normal(b, match->second);
    CHECK(na[0] * nb[0] + na[1] * nb[1] + na[2] * nb[2] < 0.0);
  }
}

TEST_CASE("deform clamp keeps tets positive for any parameters") {
  TetGrid g = TetGrid::make(4, 0.5);
  TetField f = init_sphere(g, 0.35);
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    for (auto& v : f.deform_raw.value_mut()) v = rng.uniform(-50.0, 50.0);
    Tensor pos = f.deformed_positions(g);
    const double* pv = pos.value().data();
    for (const auto& t : g.tets) {
      std::array<double, 3> p[4];
      for (int k = 0; k < 4; ++k)
        p[k] = {pv[t[k] * 3], pv[t[k] * 3 + 1], pv[t[k] * 3 + 2]};
      CHECK(signed_volume(p[0], p[1], p[2], p[3]) > 0.0);
    }
  }
}

TEST_CASE("crossing positions differentiable wrt sdf") {
  TetGrid g = TetGrid::make(4, 0.5);
  TetField f = init_sphere(g, 0.3);

  auto loss_for = [&](const Tensor& sdf_in) {
    TetField probe;
    probe.sdf = sdf_in;
    probe.deform_raw = f.deform_raw.detach();
    TriangleMesh mesh = marching_tets(probe, g);
    return sum(mesh.positions);
  };

  // eps large enough that roundoff in the summed loss stays below tol
  auto res = grad_check(loss_for, f.sdf, 1e-4, 1e-4);
  INFO("max_rel_err=" << res.max_rel_err << " checked=" << res.checked
                      << " kinks=" << res.skipped_kinks);
  CHECK(res.checked > 0);
  CHECK(res.ok());
}

TEST_CASE("crossing positions differentiable wrt deform") {
  TetGrid g = TetGrid::make(3, 0.5);
  TetField f = init_sphere(g, 0.3);
  Rng rng(4);
  for (auto& v : f.deform_raw.value_mut()) v = rng.uniform(-0.3, 0.3);

  auto loss_for = [&](const Tensor& deform_in) {
    TetField probe;
    probe.sdf = f.sdf.detach();
    probe.deform_raw = deform_in;
    TriangleMesh mesh = marching_tets(probe, g);
    return sum(mul(mesh.positions, mesh.positions));
  };

  auto res = grad_check(loss_for, f.deform_raw, 1e-5, 1e-4);
  CHECK(res.checked > 0);
  CHECK(res.ok());
}

TEST_CASE("vertex normals on sphere align with radial direction") {
  TetGrid g = TetGrid::make(16, 0.5);
  TetField f = init_sphere(g, 0.35);
  TriangleMesh mesh = marching_tets(f, g);
  vertex_normals(mesh);
  const double* pv = mesh.positions.value().data();
  const double* nv = mesh.normals.value().data();
  double sum_angle = 0.0;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    double r = std::sqrt(pv[i * 3] * pv[i * 3] + pv[i * 3 + 1] * pv[i * 3 + 1] +
                         pv[i * 3 + 2] * pv[i * 3 + 2]);
    double dot = (pv[i * 3] * nv[i * 3] + pv[i * 3 + 1] * nv[i * 3 + 1] +
                  pv[i * 3 + 2] * nv[i * 3 + 2]) /
                 r;
    double nlen = std::sqrt(nv[i * 3] * nv[i * 3] + nv[i * 3 + 1] * nv[i * 3 + 1] +
                            nv[i * 3 + 2] * nv[i * 3 + 2]);
    CHECK(nlen == doctest::Approx(1.0).epsilon(1e-6));
    sum_angle += std::acos(std::min(1.0, std::max(-1.0, dot)));
  }
  const double mean_deg = sum_angle / mesh.vertex_count() * 180.0 / 3.14159265358979;
  CHECK(mean_deg < 5.0);
}

TEST_CASE("single triangle normals equal face normal") {
  TriangleMesh m;
  m.positions = Tensor::from_data({3, 3}, {0, 0, 0, 1, 0, 0, 0, 1, 0});
  m.faces = {{0, 1, 2}};
  vertex_normals(m);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m.normals.at(i * 3 + 0) == doctest::Approx(0.0));
    CHECK(m.normals.at(i * 3 + 1) == doctest::Approx(0.0));
    CHECK(m.normals.at(i * 3 + 2) == doctest::Approx(1.0));
  }
}

TEST_CASE("planar quad normals all +z") {
  TriangleMesh m;
  m.positions = Tensor::from_data({4, 3}, {0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0});
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  vertex_normals(m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(m.normals.at(i * 3 + 2) == doctest::Approx(1.0));
}

TEST_CASE("obj export format") {
  TriangleMesh m;
  m.positions = Tensor::from_data({3, 3}, {0.123456789, 0, 0, 1, 0, 0, 0, 1, 0});
  m.faces = {{0, 1, 2}};
  vertex_normals(m);
  const auto p = (std::filesystem::temp_directory_path() / "sdsf_mesh.obj").string();
  save_obj(p, m);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "v 0.123457 0 0");
  bool saw_face = false, saw_vn = false;
  while (std::getline(in, line)) {
    if (line.rfind("vn ", 0) == 0) saw_vn = true;
    if (line.rfind("f ", 0) == 0) {
      saw_face = true;
      CHECK(line == "f 1//1 2//2 3//3");
    }
  }
  CHECK(saw_vn);
  CHECK(saw_face);
  std::remove(p.c_str());
}
