#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <stdexcept>

#include "op_common.hpp"
#include "sdsf/geometry.hpp"

namespace sdsf {

namespace {

// Accumulates unnormalized face normals (cross products, so magnitude is
// twice the face area) onto their three vertices.
Tensor accumulate_face_normals(const Tensor& pos,
                               const std::vector<std::array<std::uint32_t, 3>>& faces) {
  const std::size_t m = pos.dim(0);
  Tensor out = Tensor::zeros({m, 3});
  const double* pv = pos.value().data();
  double* ov = out.value_mut().data();
  for (const auto& f : faces) {
    const double* a = pv + f[0] * 3;
    const double* b = pv + f[1] * 3;
    const double* c = pv + f[2] * 3;
    const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const double n[3] = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                         u[0] * v[1] - u[1] * v[0]};
    for (int k = 0; k < 3; ++k) {
      ov[f[0] * 3 + k] += n[k];
      ov[f[1] * 3 + k] += n[k];
      ov[f[2] * 3 + k] += n[k];
    }
  }
  detail::record("face_normals", {&pos}, out, [pi = pos.impl(), oi = out.impl(), faces] {
    if (!pi->requires_grad) return;
    pi->ensure_grad();
    const double* g = oi->grad.data();
    const double* pv = pi->value.data();
    double* gp = pi->grad.data();
    for (const auto& f : faces) {
      const double* a = pv + f[0] * 3;
      const double* b = pv + f[1] * 3;
      const double* c = pv + f[2] * 3;
      const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
      const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
      double gn[3] = {0, 0, 0};
      for (int k = 0; k < 3; ++k)
        gn[k] = g[f[0] * 3 + k] + g[f[1] * 3 + k] + g[f[2] * 3 + k];
      // d(u x v) pulled back: g_u = v x g, g_v = g x u
      const double gu[3] = {v[1] * gn[2] - v[2] * gn[1], v[2] * gn[0] - v[0] * gn[2],
                            v[0] * gn[1] - v[1] * gn[0]};
      const double gv[3] = {gn[1] * u[2] - gn[2] * u[1], gn[2] * u[0] - gn[0] * u[2],
                            gn[0] * u[1] - gn[1] * u[0]};
      for (int k = 0; k < 3; ++k) {
        gp[f[1] * 3 + k] += gu[k];
        gp[f[2] * 3 + k] += gv[k];
        gp[f[0] * 3 + k] -= gu[k] + gv[k];
      }
    }
  });
  return out;
}

}  // namespace

void vertex_normals(TriangleMesh& mesh) {
  if (mesh.empty()) throw std::invalid_argument("vertex_normals: empty mesh");
  Tensor acc = accumulate_face_normals(mesh.positions, mesh.faces);
  const double* av = acc.value().data();
  for (std::size_t i = 0; i < acc.dim(0); ++i) {
    const double n2 = av[i * 3] * av[i * 3] + av[i * 3 + 1] * av[i * 3 + 1] +
                      av[i * 3 + 2] * av[i * 3 + 2];
    if (n2 < 1e-24)
      throw std::runtime_error("vertex_normals: vertex " + std::to_string(i) +
                               " has only degenerate faces");
  }
  mesh.normals = normalize_axis(acc, 1);
}

ManifoldReport manifold_report(const TriangleMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> count;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      std::uint32_t a = f[e];
      std::uint32_t b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  ManifoldReport r;
  r.edges = count.size();
  for (const auto& [k, c] : count) {
    if (c == 1) ++r.boundary_edges;
    if (c > 2) ++r.nonmanifold_edges;
  }
  return r;
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << std::setprecision(6);
  const double* pv = mesh.positions.defined() ? mesh.positions.value().data() : nullptr;
  const std::size_t nv = mesh.vertex_count();
  for (std::size_t i = 0; i < nv; ++i)
    f << "v " << pv[i * 3] << ' ' << pv[i * 3 + 1] << ' ' << pv[i * 3 + 2] << '\n';
  const bool has_uv = !mesh.uvs.empty();
  for (const auto& uv : mesh.uvs) f << "vt " << uv[0] << ' ' << uv[1] << '\n';
  const bool has_n = mesh.normals.defined() && mesh.normals.numel() == nv * 3;
  if (has_n) {
    const double* nv_ = mesh.normals.value().data();
    for (std::size_t i = 0; i < nv; ++i)
      f << "vn " << nv_[i * 3] << ' ' << nv_[i * 3 + 1] << ' ' << nv_[i * 3 + 2] << '\n';
  }
  for (const auto& face : mesh.faces) {
    f << 'f';
    for (int k = 0; k < 3; ++k) {
      const std::size_t idx = face[k] + 1;
      f << ' ' << idx;
      if (has_uv && has_n)
        f << '/' << idx << '/' << idx;
      else if (has_uv)
        f << '/' << idx;
      else if (has_n)
        f << "//" << idx;
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace sdsf
