#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

#include "op_common.hpp"
#include "sdsf/geometry.hpp"

namespace sdsf {

namespace {

// Even permutations of {0,1,2,3}: relabeling a positively-oriented tet by
// one of these keeps its orientation, so one winding rule per canonical sign
// pattern suffices.
std::array<std::array<int, 4>, 12> even_perms() {
  std::array<std::array<int, 4>, 12> out{};
  std::array<int, 4> p = {0, 1, 2, 3};
  std::size_t k = 0;
  do {
    int inversions = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        if (p[i] > p[j]) ++inversions;
    if (inversions % 2 == 0) out[k++] = p;
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

struct CasePlan {
  int count = 0;           // positive vertices in the tet
  std::array<int, 4> map;  // canonical slot -> tet slot
};

// For every sign mask, an even permutation bringing it to the canonical
// pattern: (+,-,-,-), (-,+,+,+), or (+,+,-,-).
const std::array<CasePlan, 16>& case_table() {
  static const std::array<CasePlan, 16> table = [] {
    std::array<CasePlan, 16> t{};
    const auto perms = even_perms();
    for (int mask = 0; mask < 16; ++mask) {
      int count = 0;
      for (int i = 0; i < 4; ++i) count += (mask >> i) & 1;
      t[mask].count = count;
      if (count == 0 || count == 4) continue;
      for (const auto& p : perms) {
        auto pos = [&](int slot) { return ((mask >> p[slot]) & 1) != 0; };
        bool match = false;
        if (count == 1) match = pos(0) && !pos(1) && !pos(2) && !pos(3);
        if (count == 3) match = !pos(0) && pos(1) && pos(2) && pos(3);
        if (count == 2) match = pos(0) && pos(1) && !pos(2) && !pos(3);
        if (match) {
          t[mask].map = p;
          break;
        }
      }
    }
    return t;
  }();
  return table;
}

struct Crossing {
  std::uint32_t ia, ib;
  double t, sa, sb;
};

}  // namespace

TriangleMesh marching_tets(const TetField& field, const TetGrid& grid) {
  const std::size_t nv = grid.vertex_count();
  if (field.sdf.numel() != nv || field.deform_raw.numel() != nv * 3)
    throw std::invalid_argument("marching_tets: field size does not match grid");

  Tensor pos = field.deformed_positions(grid);

  // Exact zeros are pushed to the positive side so every vertex has a sign.
  std::vector<double> s(field.sdf.value().begin(), field.sdf.value().end());
  for (auto& v : s)
    if (v == 0.0) v = 1e-10;

  std::unordered_map<std::uint64_t, std::uint32_t> edge_out;
  edge_out.reserve(1024);
  std::vector<Crossing> crossings;
  std::vector<std::array<std::uint32_t, 3>> faces;

  auto crossing_index = [&](std::uint32_t a, std::uint32_t b) -> std::uint32_t {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
    auto it = edge_out.find(key);
    if (it != edge_out.end()) return it->second;
    double den = s[a] - s[b];
    if (std::abs(den) < 1e-12) den = den < 0.0 ? -1e-12 : 1e-12;
    Crossing c{a, b, s[a] / den, s[a], s[b]};
    const auto idx = static_cast<std::uint32_t>(crossings.size());
    crossings.push_back(c);
    edge_out.emplace(key, idx);
    return idx;
  };

  const auto& table = case_table();
  for (const auto& tet : grid.tets) {
    int mask = 0;
    for (int i = 0; i < 4; ++i)
      if (s[tet[i]] > 0.0) mask |= 1 << i;
    const CasePlan& plan = table[mask];
    if (plan.count == 0 || plan.count == 4) continue;
    const std::uint32_t A = tet[plan.map[0]];
    const std::uint32_t B = tet[plan.map[1]];
    const std::uint32_t C = tet[plan.map[2]];
    const std::uint32_t D = tet[plan.map[3]];
    if (plan.count == 1) {
      // A positive: one triangle facing A
      faces.push_back({crossing_index(A, B), crossing_index(A, D), crossing_index(A, C)});
    } else if (plan.count == 3) {
      // A negative: one triangle facing away from A
      faces.push_back({crossing_index(A, B), crossing_index(A, C), crossing_index(A, D)});
    } else {
      // A,B positive: quad split into two triangles facing the A,B side
      const std::uint32_t ac = crossing_index(A, C);
      const std::uint32_t bc = crossing_index(B, C);
      const std::uint32_t bd = crossing_index(B, D);
      const std::uint32_t ad = crossing_index(A, D);
      faces.push_back({ac, bc, bd});
      faces.push_back({ac, bd, ad});
    }
  }

  TriangleMesh mesh;
  mesh.faces = std::move(faces);
  const std::size_t m = crossings.size();
  std::vector<double> out_pos(m * 3);
  const double* pv = pos.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    const Crossing& c = crossings[i];
    for (int d = 0; d < 3; ++d)
      out_pos[i * 3 + d] = (1.0 - c.t) * pv[c.ia * 3 + d] + c.t * pv[c.ib * 3 + d];
  }
  Tensor out = Tensor::from_data({m, 3}, std::move(out_pos));
  detail::record("marching_tets", {&pos, &field.sdf}, out,
                 [pi = pos.impl(), si = field.sdf.impl(), oi = out.impl(),
                  crossings = std::move(crossings)] {
                   const double* g = oi->grad.data();
                   const double* pv = pi->value.data();
                   const bool wp = pi->requires_grad;
                   const bool ws = si->requires_grad;
                   if (wp) pi->ensure_grad();
                   if (ws) si->ensure_grad();
                   for (std::size_t i = 0; i < crossings.size(); ++i) {
                     const Crossing& c = crossings[i];
                     double gt = 0.0;
                     for (int d = 0; d < 3; ++d) {
                       const double gd = g[i * 3 + d];
                       if (wp) {
                         pi->grad[c.ia * 3 + d] += gd * (1.0 - c.t);
                         pi->grad[c.ib * 3 + d] += gd * c.t;
                       }
                       gt += gd * (pv[c.ib * 3 + d] - pv[c.ia * 3 + d]);
                     }
                     if (ws) {
                       double den = c.sa - c.sb;
                       if (std::abs(den) < 1e-12) den = den < 0.0 ? -1e-12 : 1e-12;
                       const double den2 = den * den;
                       si->grad[c.ia] += gt * (-c.sb / den2);
                       si->grad[c.ib] += gt * (c.sa / den2);
                     }
                   }
                 });
  mesh.positions = out;
  return mesh;
}

}  // namespace sdsf
