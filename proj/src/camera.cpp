#include "sdsf/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace sdsf {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double CameraPose::focal() const { return 1.0 / std::tan(fov_deg * kPi / 360.0); }

std::array<double, 12> CameraPose::extrinsic() const {
  std::array<double, 12> m{};
  for (int r = 0; r < 3; ++r) {
    double t = 0.0;
    for (int c = 0; c < 3; ++c) {
      m[r * 4 + c] = rot[r * 3 + c];
      t -= rot[r * 3 + c] * eye[c];
    }
    m[r * 4 + 3] = t;
  }
  return m;
}

void CameraPose::validate() const {
  if (!(distance > 0.0)) throw std::invalid_argument("camera distance must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("fov out of range");
  for (int r = 0; r < 3; ++r) {
    for (int c = r; c < 3; ++c) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += rot[r * 3 + k] * rot[c * 3 + k];
      double want = (r == c) ? 1.0 : 0.0;
      if (std::abs(dot - want) > 1e-9)
        throw std::invalid_argument("camera rotation is not orthonormal");
    }
  }
  double d2 = eye[0] * eye[0] + eye[1] * eye[1] + eye[2] * eye[2];
  if (std::abs(std::sqrt(d2) - distance) > 1e-9)
    throw std::invalid_argument("camera eye does not match its distance");
}

CameraPose make_pose(double azimuth_deg, double elevation_deg, double distance,
                     double fov_deg) {
  if (!(distance > 0.0)) throw std::invalid_argument("camera distance must be positive");
  if (std::abs(elevation_deg) >= 90.0)
    throw std::invalid_argument("elevation must stay below the poles");

  CameraPose cam;
  cam.azimuth_deg = azimuth_deg;
  cam.elevation_deg = elevation_deg;
  cam.distance = distance;
  cam.fov_deg = fov_deg;

  double az = azimuth_deg * kPi / 180.0;
  double el = elevation_deg * kPi / 180.0;
  std::array<double, 3> z = {std::cos(el) * std::cos(az), std::sin(el),
                             std::cos(el) * std::sin(az)};
  cam.eye = {distance * z[0], distance * z[1], distance * z[2]};

  // up x z, normalized; elevation < 90 keeps this well conditioned
  std::array<double, 3> x = {z[2], 0.0, -z[0]};
  double xn = std::sqrt(x[0] * x[0] + x[2] * x[2]);
  x = {x[0] / xn, 0.0, x[2] / xn};
  std::array<double, 3> y = {z[1] * x[2] - z[2] * x[1], z[2] * x[0] - z[0] * x[2],
                             z[0] * x[1] - z[1] * x[0]};

  cam.rot = {x[0], x[1], x[2], y[0], y[1], y[2], z[0], z[1], z[2]};
  return cam;
}

std::array<CameraPose, 4> sample_camera_quad(Rng& rng, const CameraRanges& ranges,
                                             double fov_deg) {
  if (!(ranges.elevation_min < ranges.elevation_max) ||
      !(ranges.distance_min < ranges.distance_max))
    throw std::invalid_argument("camera ranges must satisfy min < max");

  double base = rng.uniform(0.0, 360.0);
  double elevation = rng.uniform(ranges.elevation_min, ranges.elevation_max);
  double distance = rng.uniform(ranges.distance_min, ranges.distance_max);

  std::array<CameraPose, 4> quad;
  for (int k = 0; k < 4; ++k) {
    double az = std::fmod(base + 90.0 * k, 360.0);
    quad[k] = make_pose(az, elevation, distance, fov_deg);
  }
  return quad;
}

Projected project_point(const CameraPose& cam, const std::array<double, 3>& p, int res) {
  double d[3] = {p[0] - cam.eye[0], p[1] - cam.eye[1], p[2] - cam.eye[2]};
  double xc = cam.rot[0] * d[0] + cam.rot[1] * d[1] + cam.rot[2] * d[2];
  double yc = cam.rot[3] * d[0] + cam.rot[4] * d[1] + cam.rot[5] * d[2];
  double zc = cam.rot[6] * d[0] + cam.rot[7] * d[1] + cam.rot[8] * d[2];
  double w = -zc;
  double f = cam.focal();
  Projected q;
  q.w = w;
  q.x = (1.0 + f * xc / w) * 0.5 * res;
  q.y = (1.0 - f * yc / w) * 0.5 * res;
  return q;
}

}  // namespace sdsf
