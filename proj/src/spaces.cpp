#include "stokes/spaces.hpp"

#include <cmath>
#include <stdexcept>

namespace stokes {

std::string_view to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::p1_scalar:
      return "p1_scalar";
    case SpaceKind::p1_vec:
      return "p1_vec";
    case SpaceKind::p2_vec:
      return "p2_vec";
    case SpaceKind::mini_bubble_vec:
      return "mini_bubble_vec";
    case SpaceKind::th_edge_bubble:
      return "th_edge_bubble";
    case SpaceKind::nedelec:
      return "nedelec";
    case SpaceKind::nedelec_z0:
      return "nedelec_z0";
  }
  return "?";
}

namespace {

void finalize_free(FeSpace& s) {
  s.free_of_dof.assign(static_cast<std::size_t>(s.n_dofs), -1);
  s.dof_of_free.clear();
  for (Index d = 0; d < s.n_dofs; ++d) {
    if (s.dirichlet[static_cast<std::size_t>(d)]) continue;
    s.free_of_dof[static_cast<std::size_t>(d)] = static_cast<Index>(s.dof_of_free.size());
    s.dof_of_free.push_back(d);
  }
}

FeSpace unconstrained(SpaceKind kind, Index n) {
  FeSpace s;
  s.kind = kind;
  s.n_dofs = n;
  s.dirichlet.assign(static_cast<std::size_t>(n), false);
  finalize_free(s);
  return s;
}

// The subspace's own dofs are its basis columns, all free.
FeSpace subspace(SpaceKind kind, SparseMatrix basis) {
  FeSpace s = unconstrained(kind, basis.cols());
  s.basis = std::move(basis);
  return s;
}

Point edge_tangent(const TriMesh& mesh, Index e) {
  const auto& ev = mesh.edges[static_cast<std::size_t>(e)];
  return mesh.vertices[static_cast<std::size_t>(ev[1])] - mesh.vertices[static_cast<std::size_t>(ev[0])];
}

SparseMatrix th_bubble_basis(const TriMesh& mesh, const EdgePartition& part) {
  const Index nv = mesh.num_vertices();
  const Index n_p2 = 2 * (nv + mesh.num_edges());
  std::vector<Eigen::Triplet<double>> trip;
  Index col = 0;
  // 6 l_i l_j v = (3/2) v * (4 l_i l_j): the P2 edge-node value is 1.5 v.
  for (Index e : part.interior) {
    const Point t = edge_tangent(mesh, e);
    trip.emplace_back(2 * (nv + e), col, 1.5 * t(0));
    trip.emplace_back(2 * (nv + e) + 1, col, 1.5 * t(1));
    ++col;
  }
  for (Index e : part.interior_macro) {
    const Point t = edge_tangent(mesh, e);
    trip.emplace_back(2 * (nv + e), col, -1.5 * t(1));
    trip.emplace_back(2 * (nv + e) + 1, col, 1.5 * t(0));
    ++col;
  }
  SparseMatrix B(n_p2, col);
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

SparseMatrix z0_basis(const TriMesh& mesh, const EdgePartition& part) {
  std::vector<Eigen::Triplet<double>> trip;
  Index col = 0;
  // Lifting of a unit interior coefficient: same rule as z0_boundary_coeffs,
  // applied only on the (at most two) neighbouring triangles.
  for (Index e : part.interior) {
    trip.emplace_back(e, col, 1.0);
    for (Index t : mesh.edge_tris[static_cast<std::size_t>(e)]) {
      if (mesh.tri_kind[static_cast<std::size_t>(t)] == TriKind::interior) continue;
      const auto c = whitney_curls(mesh, t);
      const double r = c[static_cast<std::size_t>(mesh.local_edge_index(t, e))];
      double kk = 0.0;
      for (int k = 0; k < 3; ++k)
        if (mesh.edge_kind[static_cast<std::size_t>(mesh.tri_edges[static_cast<std::size_t>(t)][k])] == EdgeKind::boundary)
          kk += c[static_cast<std::size_t>(k)] * c[static_cast<std::size_t>(k)];
      for (int k = 0; k < 3; ++k) {
        const Index b = mesh.tri_edges[static_cast<std::size_t>(t)][k];
        if (mesh.edge_kind[static_cast<std::size_t>(b)] == EdgeKind::boundary)
          trip.emplace_back(b, col, -r * c[static_cast<std::size_t>(k)] / kk);
      }
    }
    ++col;
  }
  // One extra curl-free combination of the two boundary edges of each corner triangle.
  for (Index t : part.tris_two_boundary) {
    const auto c = whitney_curls(mesh, t);
    std::vector<std::pair<Index, double>> bnd;
    for (int k = 0; k < 3; ++k) {
      const Index e = mesh.tri_edges[static_cast<std::size_t>(t)][k];
      if (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::boundary) bnd.emplace_back(e, c[static_cast<std::size_t>(k)]);
    }
    const double scale = std::hypot(bnd[0].second, bnd[1].second);
    trip.emplace_back(bnd[0].first, col, bnd[1].second / scale);
    trip.emplace_back(bnd[1].first, col, -bnd[0].second / scale);
    ++col;
  }
  SparseMatrix Z(mesh.num_edges(), col);
  Z.setFromTriplets(trip.begin(), trip.end());
  return Z;
}

}  // namespace

int edge_sign(const TriMesh& mesh, Index t, int k) {
  const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
  const auto [p, q] = local_edge_vertices(k);
  return tri[p] < tri[q] ? 1 : -1;
}

LocalField<double> whitney_on(const TriMesh& mesh, Index t, int k) {
  const auto [p, q] = local_edge_vertices(k);
  const auto g = mesh.geometry(t);
  return edge_sign(mesh, t, k) > 0 ? whitney(g, p, q) : whitney(g, q, p);
}

LocalField<double> edge_bubble_on(const TriMesh& mesh, Index t, int k) {
  const auto [p, q] = local_edge_vertices(k);
  const auto g = mesh.geometry(t);
  return edge_sign(mesh, t, k) > 0 ? edge_bubble(g, p, q) : edge_bubble(g, q, p);
}

LocalField<double> normal_bubble_on(const TriMesh& mesh, Index t, int k) {
  const auto [p, q] = local_edge_vertices(k);
  const auto g = mesh.geometry(t);
  return edge_sign(mesh, t, k) > 0 ? normal_edge_bubble(g, p, q) : normal_edge_bubble(g, q, p);
}

std::array<double, 3> whitney_curls(const TriMesh& mesh, Index t) {
  const auto g = mesh.geometry(t);
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] = curl(whitney_on(mesh, t, k), g)({1.0 / 3, 1.0 / 3, 1.0 / 3});
  return c;
}

VectorXd z0_boundary_coeffs(const TriMesh& mesh, const VectorXd& coeffs) {
  if (coeffs.size() != mesh.num_edges()) throw std::invalid_argument("z0_boundary_coeffs: size mismatch");
  VectorXd z = coeffs;
  for (Index e = 0; e < mesh.num_edges(); ++e)
    if (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::boundary) z(e) = 0.0;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    if (mesh.tri_kind[static_cast<std::size_t>(t)] == TriKind::interior) continue;
    const auto c = whitney_curls(mesh, t);
    double r = 0.0;
    std::vector<std::pair<Index, double>> bnd;
    for (int k = 0; k < 3; ++k) {
      const Index e = mesh.tri_edges[static_cast<std::size_t>(t)][k];
      if (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::boundary)
        bnd.emplace_back(e, c[static_cast<std::size_t>(k)]);
      else
        r += z(e) * c[static_cast<std::size_t>(k)];
    }
    double kk = 0.0;
    for (const auto& b : bnd) kk += b.second * b.second;
    for (const auto& [e, ck] : bnd) z(e) = -r * ck / kk;
  }
  return z;
}

VectorXd gradient_whitney_coeffs(const TriMesh& mesh, const VectorXd& q) {
  VectorXd a(mesh.num_edges());
  for (Index e = 0; e < mesh.num_edges(); ++e) {
    const auto& ev = mesh.edges[static_cast<std::size_t>(e)];
    a(e) = q(ev[1]) - q(ev[0]);
  }
  return a;
}

FeSpace build_space(SpaceKind kind, const TriMesh& mesh, PartnerPolicy policy) {
  const Index nv = mesh.num_vertices(), ne = mesh.num_edges(), nt = mesh.num_triangles();
  switch (kind) {
    case SpaceKind::p1_scalar:
      return unconstrained(kind, nv);
    case SpaceKind::nedelec:
      return unconstrained(kind, ne);
    case SpaceKind::mini_bubble_vec:
      return unconstrained(kind, 2 * nt);
    case SpaceKind::p1_vec: {
      FeSpace s;
      s.kind = kind;
      s.n_dofs = 2 * nv;
      s.dirichlet.assign(static_cast<std::size_t>(s.n_dofs), false);
      for (Index v = 0; v < nv; ++v)
        if (mesh.boundary_vertex[static_cast<std::size_t>(v)]) s.dirichlet[2 * v] = s.dirichlet[2 * v + 1] = true;
      finalize_free(s);
      return s;
    }
    case SpaceKind::p2_vec: {
      FeSpace s;
      s.kind = kind;
      s.n_dofs = 2 * (nv + ne);
      s.dirichlet.assign(static_cast<std::size_t>(s.n_dofs), false);
      for (Index v = 0; v < nv; ++v)
        if (mesh.boundary_vertex[static_cast<std::size_t>(v)]) s.dirichlet[2 * v] = s.dirichlet[2 * v + 1] = true;
      for (Index e = 0; e < ne; ++e)
        if (mesh.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::boundary)
          s.dirichlet[static_cast<std::size_t>(2 * (nv + e))] = s.dirichlet[static_cast<std::size_t>(2 * (nv + e) + 1)] = true;
      finalize_free(s);
      return s;
    }
    case SpaceKind::th_edge_bubble: {
      const EdgePartition part = classify(mesh);
      return subspace(kind, th_bubble_basis(mesh, part));
    }
    case SpaceKind::nedelec_z0: {
      macroelements(mesh, policy);  // require_interior throws on inadmissible meshes
      const EdgePartition part = classify(mesh);
      return subspace(kind, z0_basis(mesh, part));
    }
  }
  throw std::invalid_argument("build_space: unknown kind");
}

MeanZeroProjector mean_zero_projector(const FeSpace& Q, const TriMesh& mesh) {
  if (Q.kind != SpaceKind::p1_scalar) throw std::invalid_argument("mean_zero_projector: pressure space must be p1_scalar");
  MeanZeroProjector p;
  p.m = VectorXd::Zero(Q.n_dofs);
  for (Index t = 0; t < mesh.num_triangles(); ++t)
    for (Index v : mesh.triangles[static_cast<std::size_t>(t)]) p.m(v) += mesh.tri_area[static_cast<std::size_t>(t)] / 3.0;
  p.measure = p.m.sum();
  return p;
}

}  // namespace stokes
