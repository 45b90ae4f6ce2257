#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdsf/dataset.hpp"

namespace sdsf {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

double norm3(const Vec3& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

double sd_sphere(const Vec3& p, const Vec3& c, double r) { return norm3(sub3(p, c)) - r; }

double sd_box(const Vec3& p, const Vec3& c, const Vec3& h) {
  const Vec3 q{std::abs(p[0] - c[0]) - h[0], std::abs(p[1] - c[1]) - h[1],
               std::abs(p[2] - c[2]) - h[2]};
  const Vec3 qp{std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
  return norm3(qp) + std::min(std::max({q[0], q[1], q[2]}), 0.0);
}

double sd_torus(const Vec3& p, const Vec3& c, double major, double minor) {
  const double dx = p[0] - c[0];
  const double dy = p[1] - c[1];
  const double dz = p[2] - c[2];
  const double ring = std::sqrt(dx * dx + dz * dz) - major;
  return std::sqrt(ring * ring + dy * dy) - minor;
}

double sd_capsule(const Vec3& p, const Vec3& c, double half, double r) {
  const double y = std::clamp(p[1] - c[1], -half, half);
  const Vec3 d{p[0] - c[0], p[1] - c[1] - y, p[2] - c[2]};
  return norm3(d) - r;
}

}  // namespace

std::string category_name(ShapeCategory c) {
  switch (c) {
    case ShapeCategory::Sphere: return "sphere";
    case ShapeCategory::Box: return "box";
    case ShapeCategory::Torus: return "torus";
    case ShapeCategory::Capsule: return "capsule";
    case ShapeCategory::Pair: return "pair";
  }
  throw std::invalid_argument("category_name: unknown category");
}

int category_label(ShapeCategory c) { return static_cast<int>(c) + 1; }

ShapeCategory category_from_label(int label) {
  if (label < 1 || label > 5)
    throw std::invalid_argument("category_from_label: label must be 1..5");
  return static_cast<ShapeCategory>(label - 1);
}

double shape_sdf(const ShapeSpec& s, const std::array<double, 3>& p) {
  switch (s.category) {
    case ShapeCategory::Sphere: return sd_sphere(p, s.center, s.radius);
    case ShapeCategory::Box: return sd_box(p, s.center, s.half_extent);
    case ShapeCategory::Torus: return sd_torus(p, s.center, s.major, s.minor);
    case ShapeCategory::Capsule: return sd_capsule(p, s.center, s.cap_half, s.cap_radius);
    case ShapeCategory::Pair:
      return std::min(sd_sphere(p, s.center, s.radius), sd_box(p, s.center2, s.half_extent));
  }
  throw std::invalid_argument("shape_sdf: unknown category");
}

std::array<double, 3> shape_albedo(const ShapeSpec& s, const std::array<double, 3>& p) {
  if (!s.two_tone) return s.color;
  return p[1] > s.center[1] ? s.color : s.color2;
}

ShapeSpec scale_shape(const ShapeSpec& s, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale_shape: factor must be positive");
  ShapeSpec out = s;
  for (int i = 0; i < 3; ++i) {
    out.center[i] = s.center[i] * factor;
    out.center2[i] = s.center2[i] * factor;
    out.half_extent[i] = s.half_extent[i] * factor;
  }
  out.radius = s.radius * factor;
  out.major = s.major * factor;
  out.minor = s.minor * factor;
  out.cap_radius = s.cap_radius * factor;
  out.cap_half = s.cap_half * factor;
  return out;
}

ShapeSpec sample_shape(ShapeCategory cat, Rng& rng) {
  ShapeSpec s;
  s.category = cat;
  auto jitter = [&rng](double amp) { return rng.uniform(-amp, amp); };
  switch (cat) {
    case ShapeCategory::Sphere:
      s.radius = rng.uniform(0.22, 0.33);
      s.center = {jitter(0.05), jitter(0.05), jitter(0.05)};
      break;
    case ShapeCategory::Box: {
      // Near-cubes in a narrow size band so a class prior has one mode to learn.
      const double h = rng.uniform(0.285, 0.315);
      s.half_extent = {h, h, h};
      s.center = {0.0, 0.0, 0.0};
      break;
    }
    case ShapeCategory::Torus:
      s.major = rng.uniform(0.2, 0.28);
      s.minor = rng.uniform(0.06, 0.1);
      break;
    case ShapeCategory::Capsule:
      s.cap_radius = rng.uniform(0.08, 0.14);
      s.cap_half = rng.uniform(0.15, 0.25);
      break;
    case ShapeCategory::Pair: {
      s.radius = rng.uniform(0.12, 0.18);
      s.center = {-0.22, jitter(0.05), jitter(0.05)};
      const double h = rng.uniform(0.1, 0.15);
      s.half_extent = {h, h, h};
      s.center2 = {0.22, jitter(0.05), jitter(0.05)};
      break;
    }
  }
  s.two_tone = rng.uniform() < 0.5;
  for (int i = 0; i < 3; ++i) s.color[i] = rng.uniform(0.1, 0.9);
  for (int i = 0; i < 3; ++i) s.color2[i] = rng.uniform(0.1, 0.9);
  return s;
}

GroundTruthView render_ground_truth(const ShapeSpec& s, const CameraPose& cam, int res,
                                    const DepthConvention& conv) {
  cam.validate();
  if (res <= 0) throw std::invalid_argument("render_ground_truth: res must be positive");
  if (!(conv.l > 0.0)) throw std::invalid_argument("render_ground_truth: l must be positive");

  GroundTruthView out;
  out.nd = Tensor::zeros({4, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
  out.albedo = Tensor::zeros({3, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
  out.mask = Tensor::zeros({1, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
  auto nd = out.nd.value_mut();
  auto alb = out.albedo.value_mut();
  auto mask = out.mask.value_mut();

  const std::size_t hw = static_cast<std::size_t>(res) * static_cast<std::size_t>(res);
  // Background: normal straight at the camera, depth on the far plane.
  for (std::size_t i = 0; i < hw; ++i) {
    nd[2 * hw + i] = 1.0;
    nd[3 * hw + i] = -1.0;
  }

  const double f = cam.focal();
  // Thresholds scale with l so a uniformly scaled scene traces identically.
  const double scale = conv.l / 0.5;
  const double hit_eps = 1e-11 * scale;
  const double coarse_eps = 1e-7 * scale;
  const double fd_eps = 1e-6 * scale;
  const double t_max = cam.distance + 4.0 * conv.l;

  for (int py = 0; py < res; ++py) {
    for (int px = 0; px < res; ++px) {
      const double u = ((2.0 * px + 1.0) / res - 1.0) / f;
      const double v = (1.0 - (2.0 * py + 1.0) / res) / f;
      // Camera looks down -z; rows of rot are the camera axes in world space.
      Vec3 dir{cam.rot[0] * u + cam.rot[3] * v - cam.rot[6],
               cam.rot[1] * u + cam.rot[4] * v - cam.rot[7],
               cam.rot[2] * u + cam.rot[5] * v - cam.rot[8]};
      const double dn = norm3(dir);
      dir = {dir[0] / dn, dir[1] / dn, dir[2] / dn};

      double t = 0.0;
      double d = 0.0;
      bool hit = false;
      for (int it = 0; it < 512; ++it) {
        const Vec3 p{cam.eye[0] + t * dir[0], cam.eye[1] + t * dir[1], cam.eye[2] + t * dir[2]};
        d = shape_sdf(s, p);
        if (d < hit_eps) {
          hit = true;
          break;
        }
        t += d;
        if (t > t_max) break;
      }
      if (!hit && d < coarse_eps && t <= t_max) hit = true;  // grazing ray that stalled out
      if (!hit) continue;

      const Vec3 p{cam.eye[0] + t * dir[0], cam.eye[1] + t * dir[1], cam.eye[2] + t * dir[2]};

      Vec3 g{shape_sdf(s, {p[0] + fd_eps, p[1], p[2]}) - shape_sdf(s, {p[0] - fd_eps, p[1], p[2]}),
             shape_sdf(s, {p[0], p[1] + fd_eps, p[2]}) - shape_sdf(s, {p[0], p[1] - fd_eps, p[2]}),
             shape_sdf(s, {p[0], p[1], p[2] + fd_eps}) - shape_sdf(s, {p[0], p[1], p[2] - fd_eps})};
      const double gn = norm3(g);
      if (gn > 0.0) g = {g[0] / gn, g[1] / gn, g[2] / gn};

      const std::size_t at = static_cast<std::size_t>(py) * res + px;
      nd[0 * hw + at] = cam.rot[0] * g[0] + cam.rot[1] * g[1] + cam.rot[2] * g[2];
      nd[1 * hw + at] = cam.rot[3] * g[0] + cam.rot[4] * g[1] + cam.rot[5] * g[2];
      nd[2 * hw + at] = cam.rot[6] * g[0] + cam.rot[7] * g[1] + cam.rot[8] * g[2];

      // View-axis offset from the object center, positive toward the camera.
      const Vec3 rel = sub3(p, {cam.eye[0], cam.eye[1], cam.eye[2]});
      const double w = -(cam.rot[6] * rel[0] + cam.rot[7] * rel[1] + cam.rot[8] * rel[2]);
      const double rev = rev_depth(cam.distance - w, conv);
      nd[3 * hw + at] = 2.0 * rev - 1.0;

      const Vec3 a = shape_albedo(s, p);
      alb[0 * hw + at] = a[0];
      alb[1 * hw + at] = a[1];
      alb[2 * hw + at] = a[2];
      mask[at] = 1.0;
    }
  }
  return out;
}

}  // namespace sdsf
