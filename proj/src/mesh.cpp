#include "stokes/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <locale>
#include <map>
#include <ostream>
#include <tuple>

namespace stokes {

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::square:
      return "square";
    case Domain::lshape:
      return "lshape";
    case Domain::slit:
      return "slit";
  }
  return "?";
}

Domain parse_domain(std::string_view name) {
  if (name == "square") return Domain::square;
  if (name == "lshape") return Domain::lshape;
  if (name == "slit") return Domain::slit;
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

double TriMesh::nominal_h() const { return std::ldexp(1.0, -level); }

double TriMesh::measure() const {
  double s = 0.0;
  for (double a : tri_area) s += a;
  return s;
}

TriangleGeometry<double> TriMesh::geometry(Index t) const {
  const auto& tri = triangles[static_cast<std::size_t>(t)];
  return TriangleGeometry<double>(vertices[static_cast<std::size_t>(tri[0])], vertices[static_cast<std::size_t>(tri[1])],
                                  vertices[static_cast<std::size_t>(tri[2])]);
}

double TriMesh::tri_diameter(Index t) const {
  const auto& tri = triangles[static_cast<std::size_t>(t)];
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    const auto& a = vertices[static_cast<std::size_t>(tri[k])];
    const auto& b = vertices[static_cast<std::size_t>(tri[(k + 1) % 3])];
    d = std::max(d, (a - b).norm());
  }
  return d;
}

int TriMesh::local_edge_index(Index t, Index e) const {
  const auto& te = tri_edges[static_cast<std::size_t>(t)];
  for (int k = 0; k < 3; ++k)
    if (te[k] == e) return k;
  return -1;
}

int TriMesh::local_vertex_index(Index t, Index v) const {
  const auto& tri = triangles[static_cast<std::size_t>(t)];
  for (int k = 0; k < 3; ++k)
    if (tri[k] == v) return k;
  return -1;
}

namespace {

// Grid vertex key: (j, i, side). side = 1 marks the upper copy of a slit vertex.
using VertexKey = std::tuple<int, int, int>;

bool square_present(Domain d, int i, int j, int n) {
  if (d != Domain::lshape) return true;
  return !(2 * i >= n && 2 * j >= n);
}

}  // namespace

TriMesh build_mesh(Domain domain, int level) {
  if (level < 1) throw MeshError("build_mesh: level must be >= 1");
  if (level > 12) throw MeshError("build_mesh: level too large");
  const int n = 1 << level;
  const int half = n / 2;

  TriMesh mesh;
  mesh.domain = domain;
  mesh.level = level;

  // Slit vertices (i >= n/2, j = n/2), except the tip, get a second copy used by
  // the squares above the slit.
  auto key_for = [&](int i, int j, bool above_slit_square) -> VertexKey {
    const bool on_slit = domain == Domain::slit && j == half && i > half;
    return {j, i, (on_slit && above_slit_square) ? 1 : 0};
  };

  std::vector<std::array<VertexKey, 3>> tri_keys;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (!square_present(domain, i, j, n)) continue;
      const bool above = j == half;  // square whose bottom side lies on y = 1/2
      const VertexKey a = key_for(i, j, above), b = key_for(i + 1, j, above);
      const VertexKey c = key_for(i + 1, j + 1, above), d = key_for(i, j + 1, above);
      tri_keys.push_back({a, b, c});
      tri_keys.push_back({a, c, d});
    }
  }

  std::map<VertexKey, Index> vid;
  for (const auto& tk : tri_keys)
    for (const auto& k : tk) vid.emplace(k, 0);
  Index next = 0;
  mesh.vertices.reserve(vid.size());
  for (auto& [k, id] : vid) {
    id = next++;
    const auto [j, i, side] = k;
    mesh.vertices.emplace_back(static_cast<double>(i) / n, static_cast<double>(j) / n);
  }
  for (const auto& tk : tri_keys) mesh.triangles.push_back({vid.at(tk[0]), vid.at(tk[1]), vid.at(tk[2])});

  // Edges.
  std::map<std::array<Index, 2>, std::vector<Index>> edge_map;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      const auto [p, q] = local_edge_vertices(k);
      const Index a = tri[p], b = tri[q];
      edge_map[{std::min(a, b), std::max(a, b)}].push_back(t);
    }
  }
  std::map<std::array<Index, 2>, Index> edge_id;
  for (const auto& [ev, tris] : edge_map) {
    if (tris.size() > 2) throw MeshError("build_mesh: non-manifold edge");
    edge_id[ev] = mesh.num_edges();
    mesh.edges.push_back(ev);
    mesh.edge_kind.push_back(tris.size() == 2 ? EdgeKind::interior : EdgeKind::boundary);
    mesh.edge_tris.push_back({tris[0], tris.size() == 2 ? tris[1] : Index(-1)});
  }
  mesh.tri_edges.resize(mesh.triangles.size());
  mesh.boundary_vertex.assign(mesh.vertices.size(), false);
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k) {
      const auto [p, q] = local_edge_vertices(k);
      mesh.tri_edges[static_cast<std::size_t>(t)][k] = edge_id.at({std::min(tri[p], tri[q]), std::max(tri[p], tri[q])});
    }
  }
  for (Index e = 0; e < mesh.num_edges(); ++e) {
    if (mesh.edge_kind[static_cast<std::size_t>(e)] != EdgeKind::boundary) continue;
    for (Index v : mesh.edges[static_cast<std::size_t>(e)]) mesh.boundary_vertex[static_cast<std::size_t>(v)] = true;
  }

  // Geometry and triangle kinds.
  mesh.h = 0.0;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto g = mesh.geometry(t);
    const auto& x = g.x;
    const double signed2 = (x[1] - x[0])(0) * (x[2] - x[0])(1) - (x[1] - x[0])(1) * (x[2] - x[0])(0);
    if (!(signed2 > 0.0)) throw MeshError("build_mesh: triangle not counterclockwise");
    mesh.tri_area.push_back(g.area);
    mesh.h = std::max(mesh.h, mesh.tri_diameter(t));
    int nb = 0;
    for (Index e : mesh.tri_edges[static_cast<std::size_t>(t)])
      nb += mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::boundary ? 1 : 0;
    if (nb == 3) throw MeshError("build_mesh: triangle with three boundary edges");
    mesh.tri_kind.push_back(nb == 0 ? TriKind::interior : nb == 1 ? TriKind::one_boundary_edge : TriKind::two_boundary_edges);
  }

  // Euler characteristic of a disk.
  if (mesh.num_vertices() - mesh.num_edges() + mesh.num_triangles() != 1)
    throw MeshError("build_mesh: Euler formula violated");
  return mesh;
}

EdgePartition classify(const TriMesh& mesh) {
  EdgePartition p;
  for (Index e = 0; e < mesh.num_edges(); ++e) {
    (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::interior ? p.interior : p.boundary).push_back(e);
  }
  std::vector<int> macro_count(mesh.edges.size(), 0);
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    int nb = 0;
    Index interior_edge = -1;
    for (Index e : mesh.tri_edges[static_cast<std::size_t>(t)]) {
      if (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::boundary)
        ++nb;
      else
        interior_edge = e;
    }
    if (nb == 3) throw MeshError("classify: triangle " + std::to_string(t) + " has three boundary edges");
    if (nb == 0) p.tris_interior.push_back(t);
    if (nb == 1) p.tris_one_boundary.push_back(t);
    if (nb == 2) {
      p.tris_two_boundary.push_back(t);
      ++macro_count[static_cast<std::size_t>(interior_edge)];
    }
  }
  for (Index e : p.interior) {
    const int c = macro_count[static_cast<std::size_t>(e)];
    if (c > 1) throw MeshError("classify: edge " + std::to_string(e) + " is e_T for two triangles");
    (c == 1 ? p.interior_macro : p.interior_single).push_back(e);
  }
  return p;
}

std::vector<Macroelement> macroelements(const TriMesh& mesh, PartnerPolicy policy) {
  const EdgePartition part = classify(mesh);
  std::vector<Macroelement> out;
  for (Index t : part.tris_two_boundary) {
    Macroelement m;
    m.boundary_tri = t;
    for (Index e : mesh.tri_edges[static_cast<std::size_t>(t)])
      if (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::interior) m.shared_edge = e;
    const auto& et = mesh.edge_tris[static_cast<std::size_t>(m.shared_edge)];
    m.partner_tri = et[0] == t ? et[1] : et[0];
    const auto [x1, x2] = mesh.edges[static_cast<std::size_t>(m.shared_edge)];
    auto third = [&](Index tri) {
      for (Index v : mesh.triangles[static_cast<std::size_t>(tri)])
        if (v != x1 && v != x2) return v;
      return Index(-1);
    };
    m.vertex_ids = {third(t), x1, x2, third(m.partner_tri)};
    const auto& V = mesh.vertices;
    m.hat_x0 = V[static_cast<std::size_t>(x1)] + V[static_cast<std::size_t>(x2)] - V[static_cast<std::size_t>(m.vertex_ids[3])];
    m.partner_is_interior = mesh.tri_kind[static_cast<std::size_t>(m.partner_tri)] == TriKind::interior;
    if (!m.partner_is_interior && policy == PartnerPolicy::require_interior) {
      throw MeshError("macroelements: assumption violated, partner of triangle " + std::to_string(t) +
                      " is a boundary triangle (" + std::string(to_string(mesh.domain)) + ", level " +
                      std::to_string(mesh.level) + ")");
    }
    out.push_back(m);
  }
  return out;
}

double macro_alpha(const TriMesh& mesh, const Macroelement& m) {
  const auto& V = mesh.vertices;
  // Barycentrics of T in the local order (x1, x2, x0).
  const TriangleGeometry<double> T(V[static_cast<std::size_t>(m.vertex_ids[1])], V[static_cast<std::size_t>(m.vertex_ids[2])],
                                   V[static_cast<std::size_t>(m.vertex_ids[0])]);
  const auto l = T.barycentric(m.hat_x0);
  return 1.0 - l[0] - l[1];
}

ShapeMetrics shape_metrics(const TriMesh& mesh) {
  ShapeMetrics s;
  s.gamma0 = 0.0;
  s.gamma1 = std::numeric_limits<double>::infinity();
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const double a = mesh.tri_area[static_cast<std::size_t>(t)];
    if (!(a > 0.0)) throw MeshError("shape_metrics: degenerate triangle");
    const double hT = mesh.tri_diameter(t);
    s.gamma0 = std::max(s.gamma0, hT * hT / a);
    s.gamma1 = std::min(s.gamma1, hT / mesh.h);
  }
  s.alpha_min = 1.0;
  for (const auto& m : macroelements(mesh, PartnerPolicy::allow_boundary)) s.alpha_min = std::min(s.alpha_min, macro_alpha(mesh, m));
  return s;
}

void write_mesh(std::ostream& os, const TriMesh& mesh) {
  const auto old_locale = os.imbue(std::locale::classic());
  const auto old_prec = os.precision(17);
  for (const auto& v : mesh.vertices) os << "v " << v(0) << ' ' << v(1) << '\n';
  for (const auto& t : mesh.triangles) os << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (Index e = 0; e < mesh.num_edges(); ++e) {
    const auto& ev = mesh.edges[static_cast<std::size_t>(e)];
    os << "e " << ev[0] << ' ' << ev[1] << ' '
       << (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::interior ? "interior" : "boundary") << '\n';
  }
  os.precision(old_prec);
  os.imbue(old_locale);
}

}  // namespace stokes
