#include "sdsf/depth_norm.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sdsf {

namespace {
constexpr double kSqrt3 = 1.7320508075688772935274463415059;

void check_domain(double z, const DepthConvention& conv, const char* op) {
  if (conv.l <= 0.0) throw std::invalid_argument(std::string(op) + ": l must be positive");
  const double r = kSqrt3 * conv.l;
  if (z < -r - 1e-12 || z > r + 1e-12)
    throw std::invalid_argument(std::string(op) + ": z=" + std::to_string(z) +
                                " outside [-sqrt(3)l, sqrt(3)l]");
}
}  // namespace

double disp(double z, const DepthConvention& conv) {
  check_domain(z, conv, "disp");
  const double r = kSqrt3 * conv.l;
  if (conv.d_cam <= r)
    throw std::invalid_argument("disp: d_cam=" + std::to_string(conv.d_cam) +
                                " must exceed sqrt(3)*l=" + std::to_string(r));
  const double num = 1.0 / (conv.d_cam - z) - 1.0 / (conv.d_cam + r);
  const double den = 1.0 / (conv.d_cam - r) - 1.0 / (conv.d_cam + r);
  return num / den;
}

double rev_depth(double z, const DepthConvention& conv) {
  check_domain(z, conv, "rev_depth");
  const double r = kSqrt3 * conv.l;
  return (r + z) / (2.0 * r);
}

std::vector<InvarianceRow> invariance_report(const std::vector<InvarianceSample>& samples) {
  std::vector<InvarianceRow> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.scale <= 0.0) throw std::invalid_argument("invariance_report: scale must be positive");
    DepthConvention base{s.l, s.d_cam};
    DepthConvention scaled{s.l * s.scale, s.d_cam};
    InvarianceRow row;
    row.in = s;
    row.rev_delta = std::abs(rev_depth(s.z * s.scale, scaled) - rev_depth(s.z, base));
    row.disp_delta = std::abs(disp(s.z * s.scale, scaled) - disp(s.z, base));
    rows.push_back(row);
  }
  return rows;
}

std::string invariance_csv(const std::vector<InvarianceRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "z,l,scale,d_cam,rev_delta,disp_delta\n";
  for (const auto& r : rows)
    os << r.in.z << ',' << r.in.l << ',' << r.in.scale << ',' << r.in.d_cam << ','
       << r.rev_delta << ',' << r.disp_delta << '\n';
  return os.str();
}

}  // namespace sdsf
