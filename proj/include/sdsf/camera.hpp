#pragma once

#include <array>

#include "sdsf/rng.hpp"

namespace sdsf {

// Right-handed world, y up. The camera orbits the origin: azimuth 0 puts the
// eye on +x, azimuth 90 on +z, elevation tilts it upward. It always aims at
// the origin and looks down its own -z.
struct CameraPose {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double distance = 1.7;
  double fov_deg = 60.0;
  std::array<double, 3> eye{};
  std::array<double, 9> rot{};  // row-major world-to-camera rotation

  double focal() const;  // 1 / tan(fov/2), square pixels

  // [R | -R*eye], row-major 3x4
  std::array<double, 12> extrinsic() const;

  // Checks the rotation block is orthonormal and the eye sits at `distance`
  // from the origin. Throws std::invalid_argument otherwise.
  void validate() const;
};

CameraPose make_pose(double azimuth_deg, double elevation_deg, double distance,
                     double fov_deg = 60.0);

struct CameraRanges {
  double elevation_min = 5.0;
  double elevation_max = 30.0;
  double distance_min = 1.5;
  double distance_max = 1.9;
};

// Four poses at azimuths {a, a+90, a+180, a+270} with a ~ U[0,360), sharing
// one elevation and one distance draw.
std::array<CameraPose, 4> sample_camera_quad(Rng& rng, const CameraRanges& ranges,
                                             double fov_deg = 60.0);

struct Projected {
  double x = 0.0;  // pixel coordinates, y down, pixel centers at half-integers
  double y = 0.0;
  double w = 0.0;  // distance along the view axis, positive in front
};

Projected project_point(const CameraPose& cam, const std::array<double, 3>& p, int res);

}  // namespace sdsf
