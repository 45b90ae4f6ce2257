#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sdsf/camera.hpp"
#include "sdsf/png_io.hpp"
#include "sdsf/render.hpp"
#include "sdsf/rng.hpp"
#include "sdsf/tensor_io.hpp"

using namespace sdsf;

namespace {

TriangleMesh tri_mesh(std::vector<double> pos,
                      std::vector<std::array<std::uint32_t, 3>> faces,
                      bool requires_grad = false) {
  TriangleMesh m;
  const std::size_t nverts = pos.size() / 3;
  m.positions = Tensor::from_data({nverts, 3}, std::move(pos), requires_grad);
  m.faces = std::move(faces);
  return m;
}

double px_at(const Tensor& img, std::size_t c, int x, int y) {
  const std::size_t res = img.dim(img.rank() - 1);
  return img.value()[c * res * res + static_cast<std::size_t>(y) * res + x];
}

// Moller-Trumbore; returns the distance along dir, or +inf on miss
double ray_tri(const double* o, const double* dir, const double* a, const double* b,
               const double* c) {
  double e1[3], e2[3];
  for (int i = 0; i < 3; ++i) {
    e1[i] = b[i] - a[i];
    e2[i] = c[i] - a[i];
  }
  double p[3] = {dir[1] * e2[2] - dir[2] * e2[1], dir[2] * e2[0] - dir[0] * e2[2],
                 dir[0] * e2[1] - dir[1] * e2[0]};
  double det = e1[0] * p[0] + e1[1] * p[1] + e1[2] * p[2];
  if (std::abs(det) < 1e-14) return std::numeric_limits<double>::infinity();
  double tv[3] = {o[0] - a[0], o[1] - a[1], o[2] - a[2]};
  double u = (tv[0] * p[0] + tv[1] * p[1] + tv[2] * p[2]) / det;
  if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  double q[3] = {tv[1] * e1[2] - tv[2] * e1[1], tv[2] * e1[0] - tv[0] * e1[2],
                 tv[0] * e1[1] - tv[1] * e1[0]};
  double v = (dir[0] * q[0] + dir[1] * q[1] + dir[2] * q[2]) / det;
  if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
  double t = (e2[0] * q[0] + e2[1] * q[1] + e2[2] * q[2]) / det;
  return t > 0.0 ? t : std::numeric_limits<double>::infinity();
}

// world ray through a pixel center
void pixel_ray(const CameraPose& cam, int res, int x, int y, double* o, double* dir) {
  const double ndc_x = 2.0 * (x + 0.5) / res - 1.0;
  const double ndc_y = 1.0 - 2.0 * (y + 0.5) / res;
  const double f = cam.focal();
  const double dc[3] = {ndc_x / f, ndc_y / f, -1.0};
  for (int i = 0; i < 3; ++i) {
    o[i] = cam.eye[i];
    dir[i] = cam.rot[i] * dc[0] + cam.rot[3 + i] * dc[1] + cam.rot[6 + i] * dc[2];
  }
}

std::array<double, 9> axis_rotation(double ax, double ay, double az, double deg) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= n;
  ay /= n;
  az /= n;
  const double th = deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(th), s = std::sin(th), t = 1.0 - c;
  return {t * ax * ax + c,      t * ax * ay - s * az, t * ax * az + s * ay,
          t * ax * ay + s * az, t * ay * ay + c,      t * ay * az - s * ax,
          t * ax * az - s * ay, t * ay * az + s * ax, t * az * az + c};
}

}  // namespace

TEST_CASE("orbit poses are orthonormal and aim at the origin") {
  Rng rng(77);
  for (int i = 0; i < 50; ++i) {
    double az = rng.uniform(0.0, 360.0);
    double el = rng.uniform(-80.0, 80.0);
    double d = rng.uniform(1.0, 3.0);
    CameraPose cam = make_pose(az, el, d);
    CHECK_NOTHROW(cam.validate());

    // the eye maps to the camera origin
    auto ex = cam.extrinsic();
    for (int r = 0; r < 3; ++r) {
      double v = ex[r * 4 + 3];
      for (int c = 0; c < 3; ++c) v += ex[r * 4 + c] * cam.eye[c];
      CHECK(std::abs(v) < 1e-12);
    }

    // the origin lands on the view axis at depth d
    Projected q = project_point(cam, {0.0, 0.0, 0.0}, 64);
    CHECK(q.x == doctest::Approx(32.0).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(32.0).epsilon(1e-12));
    CHECK(q.w == doctest::Approx(d).epsilon(1e-12));
  }
  CHECK_THROWS_AS(make_pose(0.0, 0.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(make_pose(0.0, 95.0, 1.7), std::invalid_argument);
}

TEST_CASE("projection moves with the world axes") {
  CameraPose cam = make_pose(90.0, 0.0, 1.7);  // eye on +z, looking back
  Projected up = project_point(cam, {0.0, 0.1, 0.0}, 64);
  CHECK(up.y < 32.0);  // up on screen
  Projected right = project_point(cam, {0.1, 0.0, 0.0}, 64);
  CHECK(right.x > 32.0);
  Projected nearer = project_point(cam, {0.0, 0.0, 0.2}, 64);
  CHECK(nearer.w == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("camera quads share one elevation and distance draw") {
  Rng rng(123);
  CameraRanges ranges;
  auto quad = sample_camera_quad(rng, ranges);
  const double a = quad[0].azimuth_deg;
  for (int k = 0; k < 4; ++k) {
    double want = std::fmod(a + 90.0 * k, 360.0);
    CHECK(quad[k].azimuth_deg == doctest::Approx(want).epsilon(1e-12));
    CHECK(quad[k].elevation_deg == quad[0].elevation_deg);
    CHECK(quad[k].distance == quad[0].distance);
  }

  Rng replay(123);
  auto again = sample_camera_quad(replay, ranges);
  CHECK(again[2].azimuth_deg == quad[2].azimuth_deg);
  CHECK(again[0].eye == quad[0].eye);

  CameraRanges bad;
  bad.elevation_min = 30.0;
  bad.elevation_max = 5.0;
  CHECK_THROWS_AS(sample_camera_quad(rng, bad), std::invalid_argument);
}

TEST_CASE("camera draws stay inside their ranges") {
  Rng rng(2026);
  CameraRanges ranges;
  double el_lo = 1e9, el_hi = -1e9, d_lo = 1e9, d_hi = -1e9;
  for (int i = 0; i < 10000; ++i) {
    auto quad = sample_camera_quad(rng, ranges);
    el_lo = std::min(el_lo, quad[0].elevation_deg);
    el_hi = std::max(el_hi, quad[0].elevation_deg);
    d_lo = std::min(d_lo, quad[0].distance);
    d_hi = std::max(d_hi, quad[0].distance);
    CHECK(quad[0].azimuth_deg >= 0.0);
    CHECK(quad[0].azimuth_deg < 360.0);
  }
  CHECK(el_lo >= 5.0);
  CHECK(el_hi <= 30.0);
  CHECK(el_hi - el_lo > 20.0);  // actually spans the range
  CHECK(d_lo >= 1.5);
  CHECK(d_hi <= 1.9);
}

TEST_CASE("triangle covering the center pixel rasterizes solid") {
  CameraPose cam = make_pose(90.0, 0.0, 1.7);
  auto mesh = tri_mesh({-0.5, -0.5, 0.0, 0.6, -0.4, 0.0, 0.0, 0.55, 0.0},
                       {{0, 1, 2}});
  Tensor attrs = Tensor::full({3, 1}, 0.5);
  RasterOut ro = rasterize(mesh, attrs, cam, 64, default_sigma(64));

  CHECK(px_at(ro.mask, 0, 32, 32) > 0.99);
  CHECK(px_at(ro.attr, 0, 32, 32) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(px_at(ro.mask, 0, 1, 1) == 0.0);  // far corner snaps to exact zero
  CHECK(px_at(ro.attr, 0, 1, 1) == 0.0);

  // flipped winding still renders (two-sided)
  auto flipped = tri_mesh({-0.5, -0.5, 0.0, 0.6, -0.4, 0.0, 0.0, 0.55, 0.0},
                          {{0, 2, 1}});
  RasterOut rf = rasterize(flipped, attrs, cam, 64, default_sigma(64));
  CHECK(px_at(rf.mask, 0, 32, 32) > 0.99);
}

TEST_CASE("rasterize validates its inputs") {
  CameraPose cam = make_pose(90.0, 0.0, 1.7);
  TriangleMesh empty;
  Tensor attrs = Tensor::full({3, 1}, 1.0);
  CHECK_THROWS_AS(rasterize(empty, attrs, cam, 64, 0.02), std::invalid_argument);

  auto mesh = tri_mesh({-0.5, -0.5, 0.0, 0.5, -0.5, 0.0, 0.0, 0.5, 0.0}, {{0, 1, 2}});
  CHECK_THROWS_AS(rasterize(mesh, attrs, cam, 64, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rasterize(mesh, Tensor::full({2, 1}, 1.0), cam, 64, 0.02),
                  std::invalid_argument);

  CameraPose near_cam = make_pose(90.0, 0.0, 0.3);
  CHECK_THROWS_AS(rasterize(mesh, attrs, near_cam, 64, 0.02), std::runtime_error);
}

TEST_CASE("interpolated attributes match the ray hit exactly") {
  // an affine-in-position attribute must interpolate to its exact value at
  // the hit point, which is what makes the depth channel trustworthy
  CameraPose cam = make_pose(35.0, 20.0, 1.7);
  std::vector<double> pos = {-0.45, -0.38, 0.1, 0.52, -0.41, -0.2, 0.03, 0.48, 0.05};
  auto mesh = tri_mesh(pos, {{0, 1, 2}});

  // attr = 0.3 x - 0.7 y + 0.2 z + 0.05
  auto affine = [](const double* p) {
    return 0.3 * p[0] - 0.7 * p[1] + 0.2 * p[2] + 0.05;
  };
  std::vector<double> av(3);
  for (int i = 0; i < 3; ++i) av[i] = affine(&pos[i * 3]);
  Tensor attrs = Tensor::from_data({3, 1}, av);

  const int res = 64;
  RasterOut ro = rasterize(mesh, attrs, cam, res, default_sigma(res));

  int checked = 0;
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      // anything past 0.5 is a covered pixel; 0.9 keeps a safe margin
      if (px_at(ro.mask, 0, x, y) < 0.9) continue;
      double o[3], dir[3];
      pixel_ray(cam, res, x, y, o, dir);
      double t = ray_tri(o, dir, &pos[0], &pos[3], &pos[6]);
      if (!std::isfinite(t)) continue;
      double hit[3] = {o[0] + t * dir[0], o[1] + t * dir[1], o[2] + t * dir[2]};
      CHECK(px_at(ro.attr, 0, x, y) == doctest::Approx(affine(hit)).epsilon(1e-9));
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("mask gradients match finite differences") {
  CameraPose cam = make_pose(90.0, 0.0, 1.7);
  std::vector<std::array<std::uint32_t, 3>> faces = {{0, 1, 2}};
  Tensor attrs = Tensor::full({3, 1}, 1.0);
  // deliberately lopsided; a symmetric triangle puts distance ties from the
  // soft-mask min() right on pixel centers and finite differences see the kink
  Tensor pos = Tensor::from_data(
      {3, 3}, {-0.48, -0.52, 0.03, 0.91, -0.47, -0.05, -0.52, 0.88, 0.06});

  auto f = [&](const Tensor& x) {
    TriangleMesh m;
    m.positions = x;
    m.faces = faces;
    return sum(rasterize(m, attrs, cam, 64, default_sigma(64)).mask);
  };
  auto gc = grad_check(f, pos, 1e-5, 1e-3);
  INFO("failing " << gc.failing.size() << ", max rel err " << gc.max_rel_err);
  CHECK(gc.ok());
  CHECK(gc.checked >= 6);
}

TEST_CASE("attribute image gradients match finite differences") {
  CameraPose cam = make_pose(40.0, 15.0, 1.7);
  std::vector<std::array<std::uint32_t, 3>> faces = {{0, 1, 2}, {1, 3, 2}};
  std::vector<double> base = {-0.4, -0.4, 0.0,  0.5, -0.45, 0.1,
                              -0.45, 0.5, -0.1, 0.5, 0.5,   0.2};
  Rng rng(5);
  std::vector<double> wv(2 * 32 * 32);
  rng.fill_normal(wv);
  Tensor weights = Tensor::from_data({2, 32, 32}, wv);

  Tensor attrs0 = Tensor::from_data({4, 2}, {0.1, 1.0, 0.8, -0.5, 0.3, 0.7, -0.2, 0.4});

  SUBCASE("w.r.t. vertex positions") {
    Tensor pos = Tensor::from_data({4, 3}, base);
    auto f = [&](const Tensor& x) {
      TriangleMesh m;
      m.positions = x;
      m.faces = faces;
      return sum(mul(rasterize(m, attrs0, cam, 32, default_sigma(32)).attr, weights));
    };
    auto gc = grad_check(f, pos, 1e-5, 1e-3);
    INFO("failing " << gc.failing.size() << ", max rel err " << gc.max_rel_err);
    CHECK(gc.ok());
  }

  SUBCASE("w.r.t. attributes") {
    auto mesh = tri_mesh(base, faces);
    auto f = [&](const Tensor& a) {
      return sum(mul(rasterize(mesh, a, cam, 32, default_sigma(32)).attr, weights));
    };
    auto gc = grad_check(f, attrs0, 1e-6, 1e-6);  // linear in attrs, so exact
    CHECK(gc.ok());
    CHECK(gc.skipped_kinks == 0);
  }
}

TEST_CASE("pixels just outside the silhouette borrow edge attributes") {
  CameraPose cam = make_pose(90.0, 0.0, 1.7);
  auto mesh = tri_mesh({-0.5, -0.5, 0.0, 0.5, -0.5, 0.0, 0.0, 0.5, 0.0}, {{0, 1, 2}});
  Tensor attrs = Tensor::from_data({3, 1}, {1.0, 1.0, 5.0});
  const int res = 64;
  RasterOut ro = rasterize(mesh, attrs, cam, res, default_sigma(res));

  // bottom edge projects to y ~ 48.3; the row below it is uncovered
  const int y = 50, x = 32;
  CHECK(px_at(ro.mask, 0, x, y) > 0.05);
  CHECK(px_at(ro.mask, 0, x, y) < 0.45);
  CHECK(px_at(ro.attr, 0, x, y) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("shrinking sigma recovers the hard coverage test") {
  CameraPose cam = make_pose(90.0, 0.0, 1.7);
  std::vector<double> pos = {-0.52, -0.37, 0.0, 0.48, -0.51, 0.0, 0.07, 0.49, 0.0};
  auto mesh = tri_mesh(pos, {{0, 1, 2}});
  Tensor attrs = Tensor::full({3, 1}, 1.0);
  const int res = 64;
  RasterOut ro = rasterize(mesh, attrs, cam, res, 1e-4);

  Projected q0 = project_point(cam, {pos[0], pos[1], pos[2]}, res);
  Projected q1 = project_point(cam, {pos[3], pos[4], pos[5]}, res);
  Projected q2 = project_point(cam, {pos[6], pos[7], pos[8]}, res);
  auto edge = [](const Projected& a, const Projected& b, double px, double py) {
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
  };
  int agree = 0;
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      double e0 = edge(q1, q2, x + 0.5, y + 0.5);
      double e1 = edge(q2, q0, x + 0.5, y + 0.5);
      double e2 = edge(q0, q1, x + 0.5, y + 0.5);
      double d = edge(q0, q1, q2.x, q2.y);
      bool inside = d > 0 ? (e0 >= 0 && e1 >= 0 && e2 >= 0)
                          : (e0 <= 0 && e1 <= 0 && e2 <= 0);
      if (std::abs(px_at(ro.mask, 0, x, y) - (inside ? 1.0 : 0.0)) <= 0.01) ++agree;
    }
  CHECK(agree >= res * res * 99 / 100);
}

TEST_CASE("rotating mesh and camera together changes nothing") {
  CameraPose cam = make_pose(25.0, 18.0, 1.7);
  std::vector<double> pos = {-0.45, -0.38, 0.1, 0.52, -0.41, -0.2, 0.03, 0.48, 0.05};
  Tensor attrs = Tensor::from_data({3, 1}, {0.3, 0.9, 2.0});
  auto mesh = tri_mesh(pos, {{0, 1, 2}});
  const int res = 48;
  RasterOut a = rasterize(mesh, attrs, cam, res, default_sigma(res));

  auto Q = axis_rotation(1.0, 1.0, 1.0, 40.0);
  std::vector<double> pos2(9);
  for (int v = 0; v < 3; ++v)
    for (int i = 0; i < 3; ++i)
      pos2[v * 3 + i] = Q[i * 3 + 0] * pos[v * 3] + Q[i * 3 + 1] * pos[v * 3 + 1] +
                        Q[i * 3 + 2] * pos[v * 3 + 2];
  CameraPose cam2 = cam;
  for (int i = 0; i < 3; ++i)
    cam2.eye[i] = Q[i * 3] * cam.eye[0] + Q[i * 3 + 1] * cam.eye[1] +
                  Q[i * 3 + 2] * cam.eye[2];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += cam.rot[r * 3 + k] * Q[c * 3 + k];
      cam2.rot[r * 3 + c] = v;
    }
  CHECK_NOTHROW(cam2.validate());
  auto mesh2 = tri_mesh(pos2, {{0, 1, 2}});
  RasterOut b = rasterize(mesh2, attrs, cam2, res, default_sigma(res));

  double dmax = 0.0;
  for (std::size_t i = 0; i < a.mask.value().size(); ++i)
    dmax = std::max(dmax, std::abs(a.mask.value()[i] - b.mask.value()[i]));
  for (std::size_t i = 0; i < a.attr.value().size(); ++i)
    dmax = std::max(dmax, std::abs(a.attr.value()[i] - b.attr.value()[i]));
  CHECK(dmax < 1e-9);
}

TEST_CASE("sphere renders front-facing normals and closed-form depth") {
  TetGrid grid = TetGrid::make(16);
  TetField field = init_sphere(grid, 0.35);
  CameraPose cam = make_pose(90.0, 0.0, 1.7);
  const int res = 64;
  auto gbs = render_normal_depth(field, grid, {cam}, res);
  REQUIRE(gbs.size() == 1);
  const GBuffer& gb = gbs[0];

  CHECK(px_at(gb.mask, 0, 32, 32) > 0.99);
  CHECK(px_at(gb.normal, 0, 32, 32) == doctest::Approx(0.0).epsilon(0.05));
  CHECK(std::abs(px_at(gb.normal, 1, 32, 32)) < 0.05);
  CHECK(px_at(gb.normal, 2, 32, 32) > 0.95);

  // reverse depth of the closest sphere point, 0.7020725942163689
  const double rev35 = (std::sqrt(3.0) * 0.5 + 0.35) / (2.0 * std::sqrt(3.0) * 0.5);
  CHECK(std::abs(px_at(gb.depth, 0, 32, 32) - rev35) < 5e-3);

  // the rendered depth equals the reverse depth of the actual facet hit
  TriangleMesh mesh = marching_tets(field, grid);
  const auto& pv = mesh.positions.value();
  double o[3], dir[3];
  pixel_ray(cam, res, 32, 32, o, dir);
  double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.faces) {
    double t = ray_tri(o, dir, &pv[f[0] * 3], &pv[f[1] * 3], &pv[f[2] * 3]);
    best = std::min(best, t);
  }
  REQUIRE(std::isfinite(best));
  double hit_z = o[2] + best * dir[2];  // camera on +z, so view depth is z here
  (void)dn;
  const double rev_hit = (std::sqrt(3.0) * 0.5 + hit_z) / (2.0 * std::sqrt(3.0) * 0.5);
  CHECK(px_at(gb.depth, 0, 32, 32) == doctest::Approx(rev_hit).epsilon(1e-9));

  // buffer invariants
  const std::size_t npx = static_cast<std::size_t>(res) * res;
  for (std::size_t i = 0; i < npx; ++i) {
    double d = gb.depth.value()[i];
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    if (gb.mask.value()[i] > 0.5) {
      double nx = gb.normal.value()[i];
      double ny = gb.normal.value()[npx + i];
      double nz = gb.normal.value()[2 * npx + i];
      CHECK(std::abs(std::sqrt(nx * nx + ny * ny + nz * nz) - 1.0) < 1e-3);
    }
  }

  // background corner
  CHECK(px_at(gb.mask, 0, 1, 1) == 0.0);
  CHECK(px_at(gb.depth, 0, 1, 1) == 0.0);
  CHECK(px_at(gb.normal, 2, 1, 1) == 1.0);
}

TEST_CASE("empty level set renders pure background") {
  TetGrid grid = TetGrid::make(4);
  TetField field;
  field.sdf = Tensor::full({grid.vertex_count()}, 1.0, true);
  field.deform_raw = Tensor::zeros({grid.vertex_count(), 3}, true);
  auto gbs = render_normal_depth(field, grid, {make_pose(0.0, 10.0, 1.7)}, 32);
  REQUIRE(gbs.size() == 1);
  for (double v : gbs[0].mask.value()) CHECK(v == 0.0);
  for (double v : gbs[0].depth.value()) CHECK(v == 0.0);
  CHECK(px_at(gbs[0].normal, 2, 7, 19) == 1.0);
}

TEST_CASE("render gradients reach the sdf through every stage") {
  TetGrid grid = TetGrid::make(4);
  TetField field = init_sphere(grid, 0.3);
  CameraPose cam = make_pose(55.0, 22.0, 1.7);
  const int res = 16;

  Rng rng(11);
  std::vector<double> wn(3 * res * res), wd(res * res);
  rng.fill_normal(wn);
  rng.fill_normal(wd);
  Tensor wnt = Tensor::from_data({3, static_cast<std::size_t>(res),
                                  static_cast<std::size_t>(res)},
                                 wn);
  Tensor wdt = Tensor::from_data({1, static_cast<std::size_t>(res),
                                  static_cast<std::size_t>(res)},
                                 wd);

  Tensor deform = field.deform_raw.detach();
  auto f = [&](const Tensor& sdf) {
    TetField probe;
    probe.sdf = sdf;
    probe.deform_raw = deform;
    auto gbs = render_normal_depth(probe, grid, {cam}, res);
    return add(sum(mul(gbs[0].normal, wnt)), sum(mul(gbs[0].depth, wdt)));
  };
  auto gc = grad_check(f, field.sdf.detach(), 1e-4, 1e-3);
  INFO("failing " << gc.failing.size() << " of " << gc.checked << ", max rel err "
       << gc.max_rel_err);
  CHECK(gc.ok());
  CHECK(gc.checked > 50);
}

TEST_CASE("composites blend and select") {
  Tensor fg = Tensor::full({2, 2, 2}, 2.0, true);
  Tensor bg = Tensor::full({2, 2, 2}, 4.0);
  Tensor mask = Tensor::from_data({1, 2, 2}, {0.25, 1.0, 0.0, 0.75});

  Tensor soft = soft_composite(fg, mask, bg);
  CHECK(soft.value()[0] == doctest::Approx(3.5));   // 0.25 blend
  CHECK(soft.value()[1] == doctest::Approx(2.0));   // full fg
  CHECK(soft.value()[2] == doctest::Approx(4.0));   // full bg
  CHECK(soft.value()[7] == doctest::Approx(2.5));   // second channel wraps

  backward(sum(soft));
  CHECK(fg.grad()[0] == doctest::Approx(0.25));
  CHECK(fg.grad()[1] == doctest::Approx(1.0));
  CHECK(fg.grad()[2] == doctest::Approx(0.0));

  Tensor hard = hard_composite(fg, mask, bg);
  CHECK(hard.value()[0] == 4.0);
  CHECK(hard.value()[1] == 2.0);
  CHECK(hard.value()[3] == 2.0);
}

TEST_CASE("png files round trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "sdsf_png_test";
  fs::create_directories(dir);

  Rng rng(9);
  for (int channels : {1, 3, 4}) {
    const int w = 17, h = 9;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * channels);
    for (auto& b : px) b = static_cast<std::uint8_t>(rng.index(256));
    const std::string path = (dir / ("rt" + std::to_string(channels) + ".png")).string();
    write_png(path, px.data(), w, h, channels);
    PngImage img = read_png(path);
    CHECK(img.width == w);
    CHECK(img.height == h);
    CHECK(img.channels == channels);
    CHECK(img.pixels == px);
  }

  const std::string junk = (dir / "junk.png").string();
  std::ofstream(junk) << "definitely not a png";
  CHECK_THROWS(read_png(junk));
  fs::remove_all(dir);
}

TEST_CASE("gbuffer export writes decodable images") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "sdsf_gbuf_test";
  fs::create_directories(dir);

  TetGrid grid = TetGrid::make(8);
  TetField field = init_sphere(grid, 0.35);
  auto gbs = render_normal_depth(field, grid, {make_pose(90.0, 0.0, 1.7)}, 32);
  const std::string stem = (dir / "view0").string();
  write_gbuffer_pngs(gbs[0], stem);

  PngImage nimg = read_png(stem + ".normal.png");
  CHECK(nimg.width == 32);
  CHECK(nimg.channels == 3);
  // center pixel: normal ~ (0,0,1) maps to ~(128,128,255), give or take the
  // tilt of whichever coarse facet the pixel lands on
  CHECK(std::abs(static_cast<int>(nimg.at(16, 16, 0)) - 128) <= 24);
  CHECK(nimg.at(16, 16, 2) >= 245);

  PngImage mimg = read_png(stem + ".mask.png");
  CHECK(mimg.channels == 1);
  CHECK(mimg.at(16, 16, 0) >= 240);
  CHECK(mimg.at(1, 1, 0) == 0);

  save_gbuffer_sdtf(gbs[0], (dir / "view0.gbuffer.sdtf").string());
  Checkpoint ck = load_checkpoint((dir / "view0.gbuffer.sdtf").string());
  CHECK(ck.tensors.count("normal") == 1);
  auto dv = ck.tensors.at("depth").value();
  auto gv = gbs[0].depth.value();
  REQUIRE(dv.size() == gv.size());
  CHECK(std::equal(dv.begin(), dv.end(), gv.begin()));
  fs::remove_all(dir);
}
