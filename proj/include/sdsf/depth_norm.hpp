#pragma once

#include <string>
#include <vector>

namespace sdsf {

// Depth conventions over the scene cube [-l,l]^3. z is the signed offset of
// a hit point from the object center along the view ray, positive toward the
// camera; the near/far planes sit at +-sqrt(3)*l around the center.
struct DepthConvention {
  double l = 0.5;
  double d_cam = 1.7;
};

// Disparity normalized to [0,1] between the near and far planes. Depends on
// d_cam, so two scenes that differ only by uniform scale encode differently.
double disp(double z, const DepthConvention& conv);

// (sqrt(3) l + z) / (2 sqrt(3) l): affine in z, unit range, and invariant
// under (z, l) -> (s z, s l). The engine's canonical depth channel.
double rev_depth(double z, const DepthConvention& conv);

struct InvarianceSample {
  double z, l, scale, d_cam;
};

struct InvarianceRow {
  InvarianceSample in;
  double rev_delta;
  double disp_delta;
};

std::vector<InvarianceRow> invariance_report(const std::vector<InvarianceSample>& samples);

std::string invariance_csv(const std::vector<InvarianceRow>& rows);

}  // namespace sdsf
