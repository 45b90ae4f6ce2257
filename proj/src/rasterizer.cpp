#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "op_common.hpp"
#include "sdsf/render.hpp"
#include "sdsf/threads.hpp"

namespace sdsf {

namespace {

// sigmoid(16) is within ~1e-7 of 1; beyond this many sigmas the mask is
// snapped to exact 0/1 and carries no gradient.
constexpr double kSnapSigmas = 16.0;
constexpr double kMinViewDepth = 1e-3;
constexpr double kMinScreenArea = 1e-14;
// below this screen area the winding sign is roundoff, not orientation
constexpr double kMinSilArea = 1e-10;

struct Proj {
  std::vector<double> xc, yc, w, qx, qy;
};

Proj project_all(std::span<const double> pos, const CameraPose& cam, int res) {
  std::size_t m = pos.size() / 3;
  Proj pr;
  pr.xc.resize(m);
  pr.yc.resize(m);
  pr.w.resize(m);
  pr.qx.resize(m);
  pr.qy.resize(m);
  const double f = cam.focal();
  const auto& r = cam.rot;
  for (std::size_t i = 0; i < m; ++i) {
    double d0 = pos[i * 3] - cam.eye[0];
    double d1 = pos[i * 3 + 1] - cam.eye[1];
    double d2 = pos[i * 3 + 2] - cam.eye[2];
    double xc = r[0] * d0 + r[1] * d1 + r[2] * d2;
    double yc = r[3] * d0 + r[4] * d1 + r[5] * d2;
    double w = -(r[6] * d0 + r[7] * d1 + r[8] * d2);
    pr.xc[i] = xc;
    pr.yc[i] = yc;
    pr.w[i] = w;
    if (w > kMinViewDepth) {
      pr.qx[i] = (1.0 + f * xc / w) * 0.5 * res;
      pr.qy[i] = (1.0 - f * yc / w) * 0.5 * res;
    } else {
      // faces touching this vertex are culled; keep finite placeholders
      pr.qx[i] = 0.0;
      pr.qy[i] = 0.0;
    }
  }
  return pr;
}

inline double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

struct Bary {
  double b[3];  // screen barycentrics, sum 1
  double u[3];  // b_i / w_i
  double S;     // sum of u
};

Bary face_bary(const Proj& pr, const std::array<std::uint32_t, 3>& f, double pcx,
               double pcy) {
  const double q0x = pr.qx[f[0]], q0y = pr.qy[f[0]];
  const double q1x = pr.qx[f[1]], q1y = pr.qy[f[1]];
  const double q2x = pr.qx[f[2]], q2y = pr.qy[f[2]];
  const double D = edge_fn(q0x, q0y, q1x, q1y, q2x, q2y);
  Bary bc;
  bc.b[0] = edge_fn(q1x, q1y, q2x, q2y, pcx, pcy) / D;
  bc.b[1] = edge_fn(q2x, q2y, q0x, q0y, pcx, pcy) / D;
  bc.b[2] = edge_fn(q0x, q0y, q1x, q1y, pcx, pcy) / D;
  for (int i = 0; i < 3; ++i) bc.u[i] = bc.b[i] / pr.w[f[i]];
  bc.S = bc.u[0] + bc.u[1] + bc.u[2];
  return bc;
}

struct SegHit {
  double t;
  double dist;
  double cx, cy;
};

SegHit seg_closest(double ax, double ay, double bx, double by, double px, double py) {
  double dx = bx - ax, dy = by - ay;
  double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  SegHit sh;
  sh.t = t;
  sh.cx = ax + t * dx;
  sh.cy = ay + t * dy;
  double ex = px - sh.cx, ey = py - sh.cy;
  sh.dist = std::sqrt(ex * ex + ey * ey);
  return sh;
}

struct RasterRecord {
  CameraPose cam;
  int res = 0;
  double sigma = 0.0;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::vector<std::array<std::uint32_t, 2>> sil;  // silhouette edges, vertex ids
  std::vector<std::int32_t> hit;                  // hit face per pixel, -1 none
  std::vector<std::int32_t> edge;                 // nearest silhouette edge, -1 none
};

// Chain rule through the projection: q and w as functions of one world point.
void add_point_grad(const Proj& pr, const CameraPose& cam, int res, std::uint32_t v,
                    double gqx, double gqy, double gw, std::vector<double>& gpos) {
  const double w = pr.w[v], xc = pr.xc[v], yc = pr.yc[v];
  const double k = cam.focal() * res * 0.5;
  const double iw2 = 1.0 / (w * w);
  for (int d = 0; d < 3; ++d) {
    const double r0 = cam.rot[d], r1 = cam.rot[3 + d], r2 = cam.rot[6 + d];
    gpos[v * 3 + d] += gqx * k * (r0 * w + xc * r2) * iw2 -
                       gqy * k * (r1 * w + yc * r2) * iw2 - gw * r2;
  }
}

void attr_backward(const RasterRecord& rec, const Tensor& pos, const Tensor& attrs,
                   const Tensor& out) {
  auto pi = pos.impl();
  auto ai = attrs.impl();
  auto oi = out.impl();
  const bool gp = pi->requires_grad;
  const bool ga = ai->requires_grad;
  if (!gp && !ga) return;
  if (gp) pi->ensure_grad();
  if (ga) ai->ensure_grad();

  const int res = rec.res;
  const std::size_t npx = static_cast<std::size_t>(res) * res;
  const std::size_t K = ai->shape[1];
  const double* av = ai->value.data();
  const double* ov = oi->value.data();
  const double* go = oi->grad.data();
  const Proj pr = project_all(pi->value, rec.cam, res);

  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * res + x;
      const double pcx = x + 0.5, pcy = y + 0.5;
      const std::int32_t fidx = rec.hit[idx];
      if (fidx >= 0) {
        const auto& f = rec.faces[fidx];
        const Bary bc = face_bary(pr, f, pcx, pcy);
        double gu[3] = {0.0, 0.0, 0.0};
        bool any = false;
        for (std::size_t k = 0; k < K; ++k) {
          const double g = go[k * npx + idx];
          if (g == 0.0) continue;
          any = true;
          const double A = ov[k * npx + idx];
          for (int i = 0; i < 3; ++i) {
            const double lam = bc.u[i] / bc.S;
            if (ga) ai->grad[f[i] * K + k] += lam * g;
            if (gp) gu[i] += g * (av[f[i] * K + k] - A) / bc.S;
          }
        }
        if (!gp || !any) continue;

        // u_i = b_i / w_i, b_i = E_i / D
        double gb[3], gw[3];
        for (int i = 0; i < 3; ++i) {
          gb[i] = gu[i] / pr.w[f[i]];
          gw[i] = -gu[i] * bc.b[i] / (pr.w[f[i]] * pr.w[f[i]]);
        }
        const double q0x = pr.qx[f[0]], q0y = pr.qy[f[0]];
        const double q1x = pr.qx[f[1]], q1y = pr.qy[f[1]];
        const double q2x = pr.qx[f[2]], q2y = pr.qy[f[2]];
        const double D = edge_fn(q0x, q0y, q1x, q1y, q2x, q2y);
        // dE[i][v] = d E_i / d q_v; E_i omits q_i, the pixel stays fixed
        double dE[3][3][2] = {};
        dE[0][1][0] = q2y - pcy;
        dE[0][1][1] = pcx - q2x;
        dE[0][2][0] = pcy - q1y;
        dE[0][2][1] = q1x - pcx;
        dE[1][2][0] = q0y - pcy;
        dE[1][2][1] = pcx - q0x;
        dE[1][0][0] = pcy - q2y;
        dE[1][0][1] = q2x - pcx;
        dE[2][0][0] = q1y - pcy;
        dE[2][0][1] = pcx - q1x;
        dE[2][1][0] = pcy - q0y;
        dE[2][1][1] = q0x - pcx;
        const double dD[3][2] = {{q1y - q2y, q2x - q1x},
                                 {q2y - q0y, q0x - q2x},
                                 {q0y - q1y, q1x - q0x}};
        for (int v = 0; v < 3; ++v) {
          double gqx = 0.0, gqy = 0.0;
          for (int i = 0; i < 3; ++i) {
            gqx += gb[i] * (dE[i][v][0] - bc.b[i] * dD[v][0]) / D;
            gqy += gb[i] * (dE[i][v][1] - bc.b[i] * dD[v][1]) / D;
          }
          add_point_grad(pr, rec.cam, res, f[v], gqx, gqy, gw[v], pi->grad);
        }
      } else if (rec.edge[idx] >= 0) {
        const auto& e = rec.sil[rec.edge[idx]];
        const double ax = pr.qx[e[0]], ay = pr.qy[e[0]];
        const double bx = pr.qx[e[1]], by = pr.qy[e[1]];
        const SegHit sh = seg_closest(ax, ay, bx, by, pcx, pcy);
        if (sh.dist / res > kSnapSigmas * rec.sigma) continue;
        const double wa = pr.w[e[0]], wb = pr.w[e[1]];
        const double ca = (1.0 - sh.t) / wa;
        const double cb = sh.t / wb;
        const double cs = ca + cb;
        const double la = ca / cs;
        double gla = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double g = go[k * npx + idx];
          if (g == 0.0) continue;
          const double aa = av[e[0] * K + k], ab = av[e[1] * K + k];
          if (ga) {
            ai->grad[e[0] * K + k] += la * g;
            ai->grad[e[1] * K + k] += (1.0 - la) * g;
          }
          gla += g * (aa - ab);
        }
        if (!gp || gla == 0.0) continue;

        // la = ca/(ca+cb), ca = (1-t)/wa, cb = t/wb, t the clamped projection
        // of the pixel onto the edge
        const double dla_dca = cb / (cs * cs);
        const double dla_dcb = -ca / (cs * cs);
        const double gt = gla * (dla_dca * (-1.0 / wa) + dla_dcb / wb);
        const double gwa = gla * dla_dca * (-(1.0 - sh.t) / (wa * wa));
        const double gwb = gla * dla_dcb * (-sh.t / (wb * wb));
        double gqa[2] = {0.0, 0.0}, gqb[2] = {0.0, 0.0};
        if (sh.t > 0.0 && sh.t < 1.0) {
          const double ex = bx - ax, ey = by - ay;
          const double vx = pcx - ax, vy = pcy - ay;
          const double dn = ex * ex + ey * ey;
          gqa[0] = gt * (-(ex + vx) + 2.0 * sh.t * ex) / dn;
          gqa[1] = gt * (-(ey + vy) + 2.0 * sh.t * ey) / dn;
          gqb[0] = gt * (vx - 2.0 * sh.t * ex) / dn;
          gqb[1] = gt * (vy - 2.0 * sh.t * ey) / dn;
        }
        add_point_grad(pr, rec.cam, res, e[0], gqa[0], gqa[1], gwa, pi->grad);
        add_point_grad(pr, rec.cam, res, e[1], gqb[0], gqb[1], gwb, pi->grad);
      }
    }
  }
}

void mask_backward(const RasterRecord& rec, const Tensor& pos, const Tensor& out) {
  auto pi = pos.impl();
  if (!pi->requires_grad) return;
  pi->ensure_grad();
  auto oi = out.impl();

  const int res = rec.res;
  const double* mv = oi->value.data();
  const double* go = oi->grad.data();
  const Proj pr = project_all(pi->value, rec.cam, res);

  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * res + x;
      const std::int32_t ei = rec.edge[idx];
      if (ei < 0) continue;  // snapped, flat
      const double gm = go[idx];
      if (gm == 0.0) continue;
      const auto& e = rec.sil[ei];
      const double pcx = x + 0.5, pcy = y + 0.5;
      const SegHit sh =
          seg_closest(pr.qx[e[0]], pr.qy[e[0]], pr.qx[e[1]], pr.qy[e[1]], pcx, pcy);
      if (sh.dist / res > kSnapSigmas * rec.sigma) continue;
      if (sh.dist < 1e-12) continue;
      const double m = mv[idx];
      const double sgn = rec.hit[idx] >= 0 ? 1.0 : -1.0;
      const double gd = gm * m * (1.0 - m) * sgn / (rec.sigma * res);
      // moving the closest point toward the pixel shrinks the distance
      const double nx = (pcx - sh.cx) / sh.dist;
      const double ny = (pcy - sh.cy) / sh.dist;
      add_point_grad(pr, rec.cam, res, e[0], -gd * (1.0 - sh.t) * nx,
                     -gd * (1.0 - sh.t) * ny, 0.0, pi->grad);
      add_point_grad(pr, rec.cam, res, e[1], -gd * sh.t * nx, -gd * sh.t * ny, 0.0,
                     pi->grad);
    }
  }
}

}  // namespace

RasterOut rasterize(const TriangleMesh& mesh, const Tensor& attrs, const CameraPose& cam,
                    int res, double sigma) {
  if (mesh.empty() || mesh.vertex_count() == 0)
    throw std::invalid_argument("rasterize: empty mesh");
  if (res < 2) throw std::invalid_argument("rasterize: res must be at least 2");
  if (!(sigma > 0.0)) throw std::invalid_argument("rasterize: sigma must be positive");
  if (!attrs.defined() || attrs.rank() != 2 || attrs.dim(0) != mesh.vertex_count() ||
      attrs.dim(1) < 1)
    throw std::invalid_argument("rasterize: attrs must be [vertex_count, k]");
  cam.validate();

  const std::span<const double> posv = mesh.positions.value();
  const std::size_t M = mesh.vertex_count();

  double c[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < M; ++i)
    for (int d = 0; d < 3; ++d) c[d] += posv[i * 3 + d];
  for (int d = 0; d < 3; ++d) c[d] /= static_cast<double>(M);
  double r2 = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
      double dd = posv[i * 3 + d] - c[d];
      s += dd * dd;
    }
    r2 = std::max(r2, s);
  }
  double de2 = 0.0;
  for (int d = 0; d < 3; ++d) {
    double dd = cam.eye[d] - c[d];
    de2 += dd * dd;
  }
  if (de2 <= r2)
    throw std::runtime_error("rasterize: camera is inside the mesh bounding sphere");

  auto rec = std::make_shared<RasterRecord>();
  rec->cam = cam;
  rec->res = res;
  rec->sigma = sigma;
  rec->faces = mesh.faces;

  const Proj pr = project_all(posv, cam, res);
  const std::size_t npx = static_cast<std::size_t>(res) * res;
  const std::size_t nf = mesh.faces.size();

  std::vector<double> fD(nf, 0.0);
  std::vector<std::array<int, 4>> fbox(nf);
  std::vector<char> keep(nf, 0);
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& tri = mesh.faces[f];
    if (pr.w[tri[0]] <= kMinViewDepth || pr.w[tri[1]] <= kMinViewDepth ||
        pr.w[tri[2]] <= kMinViewDepth)
      continue;
    const double D = edge_fn(pr.qx[tri[0]], pr.qy[tri[0]], pr.qx[tri[1]], pr.qy[tri[1]],
                             pr.qx[tri[2]], pr.qy[tri[2]]);
    fD[f] = D;
    if (std::abs(D) < kMinScreenArea) continue;
    double minx = std::min({pr.qx[tri[0]], pr.qx[tri[1]], pr.qx[tri[2]]});
    double maxx = std::max({pr.qx[tri[0]], pr.qx[tri[1]], pr.qx[tri[2]]});
    double miny = std::min({pr.qy[tri[0]], pr.qy[tri[1]], pr.qy[tri[2]]});
    double maxy = std::max({pr.qy[tri[0]], pr.qy[tri[1]], pr.qy[tri[2]]});
    int x0 = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
    int x1 = std::min(res - 1, static_cast<int>(std::floor(maxx - 0.5)));
    int y0 = std::max(0, static_cast<int>(std::ceil(miny - 0.5)));
    int y1 = std::min(res - 1, static_cast<int>(std::floor(maxy - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    fbox[f] = {x0, x1, y0, y1};
    keep[f] = 1;
  }

  // depth pass; rows are partitioned, so results match a serial sweep
  std::vector<double> wbuf(npx, std::numeric_limits<double>::infinity());
  rec->hit.assign(npx, -1);
  parallel_for(res, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t y = r0; y < r1; ++y) {
      const double pcy = y + 0.5;
      for (std::size_t f = 0; f < nf; ++f) {
        if (!keep[f]) continue;
        const auto& bx = fbox[f];
        if (static_cast<int>(y) < bx[2] || static_cast<int>(y) > bx[3]) continue;
        for (int x = bx[0]; x <= bx[1]; ++x) {
          const double pcx = x + 0.5;
          const Bary bc = face_bary(pr, mesh.faces[f], pcx, pcy);
          if (!(bc.b[0] >= 0.0 && bc.b[1] >= 0.0 && bc.b[2] >= 0.0)) continue;
          const double wh = 1.0 / bc.S;
          const std::size_t idx = y * res + x;
          if (wh < wbuf[idx]) {
            wbuf[idx] = wh;
            rec->hit[idx] = static_cast<std::int32_t>(f);
          }
        }
      }
    }
  });

  // silhouette edges: boundary edges, or edges between opposing screen
  // orientations (the outline plus self-occlusion rims). Every face in front
  // of the camera votes, not just rasterized ones: a sliver too thin to cover
  // a pixel center must not turn its neighbors' edges into phantom boundaries.
  // Slivers whose orientation sign is numerical noise vote as neutral.
  {
    std::unordered_map<std::uint64_t, std::array<std::uint32_t, 3>> ef;
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& tri = mesh.faces[f];
      if (pr.w[tri[0]] <= kMinViewDepth || pr.w[tri[1]] <= kMinViewDepth ||
          pr.w[tri[2]] <= kMinViewDepth)
        continue;
      const int s = std::abs(fD[f]) < kMinSilArea ? 2 : (fD[f] > 0.0 ? 0 : 1);
      for (int e = 0; e < 3; ++e) {
        std::uint32_t a = tri[e], b = tri[(e + 1) % 3];
        if (a > b) std::swap(a, b);
        ef[(static_cast<std::uint64_t>(a) << 32) | b][s]++;
      }
    }
    std::vector<std::array<std::uint32_t, 2>> cand;
    for (const auto& [key, cnt] : ef) {
      const bool rim = cnt[0] > 0 && cnt[1] > 0;
      const bool lone = cnt[0] + cnt[1] == 1 && cnt[2] == 0;
      if (rim || lone)
        cand.push_back({static_cast<std::uint32_t>(key >> 32),
                        static_cast<std::uint32_t>(key & 0xffffffffu)});
    }
    std::sort(cand.begin(), cand.end());

    // drop silhouettes hidden behind the surface: sample a few points along
    // the edge and keep it if any sample is not decisively occluded in its
    // screen neighborhood (true rims always border uncovered pixels)
    for (const auto& se : cand) {
      bool vis = false;
      for (double s : {0.25, 0.5, 0.75}) {
        const double qx = (1.0 - s) * pr.qx[se[0]] + s * pr.qx[se[1]];
        const double qy = (1.0 - s) * pr.qy[se[0]] + s * pr.qy[se[1]];
        const int x = static_cast<int>(std::floor(qx));
        const int y = static_cast<int>(std::floor(qy));
        const double we = 1.0 / ((1.0 - s) / pr.w[se[0]] + s / pr.w[se[1]]);
        double local = 0.0;
        for (int dy = -1; dy <= 1 && !vis; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= res || ny >= res) {
              vis = true;  // runs off the image, nothing recorded in front
              break;
            }
            local = std::max(local, wbuf[static_cast<std::size_t>(ny) * res + nx]);
          }
        if (vis || we <= local * 1.01 + 1e-6) {
          vis = true;
          break;
        }
      }
      if (vis) rec->sil.push_back(se);
    }
  }

  // distance to the nearest visible silhouette edge, within the snap band
  std::vector<double> dpx(npx, std::numeric_limits<double>::infinity());
  rec->edge.assign(npx, -1);
  const double band = kSnapSigmas * sigma * res + 1.5;
  parallel_for(res, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t y = r0; y < r1; ++y) {
      const double pcy = y + 0.5;
      for (std::size_t e = 0; e < rec->sil.size(); ++e) {
        const auto& se = rec->sil[e];
        const double ax = pr.qx[se[0]], ay = pr.qy[se[0]];
        const double bx = pr.qx[se[1]], by = pr.qy[se[1]];
        if (std::min(ay, by) - band > pcy || std::max(ay, by) + band < pcy) continue;
        const int x0 =
            std::max(0, static_cast<int>(std::ceil(std::min(ax, bx) - band - 0.5)));
        const int x1 = std::min(
            res - 1, static_cast<int>(std::floor(std::max(ax, bx) + band - 0.5)));
        for (int x = x0; x <= x1; ++x) {
          const std::size_t idx = y * res + x;
          const SegHit sh = seg_closest(ax, ay, bx, by, x + 0.5, pcy);
          if (sh.dist >= dpx[idx]) continue;
          dpx[idx] = sh.dist;
          rec->edge[idx] = static_cast<std::int32_t>(e);
        }
      }
    }
  });

  const std::size_t K = attrs.dim(1);
  const double* av = attrs.value().data();
  std::vector<double> attrv(K * npx, 0.0);
  std::vector<double> maskv(npx, 0.0);
  parallel_for(res, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t y = r0; y < r1; ++y) {
      for (int x = 0; x < res; ++x) {
        const std::size_t idx = y * res + x;
        const double pcx = x + 0.5, pcy = y + 0.5;
        const std::int32_t fidx = rec->hit[idx];
        const bool covered = fidx >= 0;
        if (covered) {
          const auto& f = rec->faces[fidx];
          const Bary bc = face_bary(pr, f, pcx, pcy);
          for (std::size_t k = 0; k < K; ++k) {
            double acc = 0.0;
            for (int i = 0; i < 3; ++i)
              acc += (bc.u[i] / bc.S) * av[f[i] * K + k];
            attrv[k * npx + idx] = acc;
          }
        } else if (rec->edge[idx] >= 0 && dpx[idx] / res <= kSnapSigmas * sigma) {
          const auto& e = rec->sil[rec->edge[idx]];
          const SegHit sh = seg_closest(pr.qx[e[0]], pr.qy[e[0]], pr.qx[e[1]],
                                        pr.qy[e[1]], pcx, pcy);
          const double ca = (1.0 - sh.t) / pr.w[e[0]];
          const double cb = sh.t / pr.w[e[1]];
          const double la = ca / (ca + cb);
          for (std::size_t k = 0; k < K; ++k)
            attrv[k * npx + idx] =
                la * av[e[0] * K + k] + (1.0 - la) * av[e[1] * K + k];
        }
        if (rec->edge[idx] < 0 || dpx[idx] / res > kSnapSigmas * sigma) {
          maskv[idx] = covered ? 1.0 : 0.0;
        } else {
          const double ds = (covered ? dpx[idx] : -dpx[idx]) / res;
          maskv[idx] = 1.0 / (1.0 + std::exp(-ds / sigma));
        }
      }
    }
  });

  RasterOut out;
  out.attr = Tensor::from_data({K, static_cast<std::size_t>(res),
                                static_cast<std::size_t>(res)},
                               std::move(attrv));
  out.mask = Tensor::from_data({1, static_cast<std::size_t>(res),
                                static_cast<std::size_t>(res)},
                               std::move(maskv));

  Tensor pos = mesh.positions;
  Tensor att = attrs;
  detail::record("rasterize_attr", {&mesh.positions, &attrs}, out.attr,
                 [rec, pos, att, o = out.attr]() { attr_backward(*rec, pos, att, o); });
  detail::record("rasterize_mask", {&mesh.positions}, out.mask,
                 [rec, pos, o = out.mask]() { mask_backward(*rec, pos, o); });
  return out;
}

}  // namespace sdsf
