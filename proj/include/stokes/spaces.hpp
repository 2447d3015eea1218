#pragma once

#include <Eigen/Sparse>

#include <string_view>
#include <vector>

#include "stokes/mesh.hpp"

namespace stokes {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SpaceKind { p1_scalar, p1_vec, p2_vec, mini_bubble_vec, th_edge_bubble, nedelec, nedelec_z0 };

std::string_view to_string(SpaceKind k);

/// Degree-of-freedom map for one finite element space.
///
/// Numbering (unconstrained dofs):
///   p1_scalar       vertex v                       -> v
///   p1_vec          vertex v, component c          -> 2 v + c
///   p2_vec          node n (vertex v, or nv + edge), component c -> 2 n + c
///   mini_bubble_vec triangle t, component c        -> 2 t + c
///   nedelec         edge e                         -> e
/// Free dofs keep the relative order of the unconstrained ones.
///
/// th_edge_bubble and nedelec_z0 are subspaces: `basis` holds one column per
/// basis function, expressed in unconstrained p2_vec and nedelec coordinates.
struct FeSpace {
  SpaceKind kind = SpaceKind::p1_scalar;
  Index n_dofs = 0;
  std::vector<bool> dirichlet;
  std::vector<Index> free_of_dof;  // -1 if constrained
  std::vector<Index> dof_of_free;
  SparseMatrix basis;

  Index dim() const { return static_cast<Index>(dof_of_free.size()); }
  bool is_subspace() const { return kind == SpaceKind::th_edge_bubble || kind == SpaceKind::nedelec_z0; }
};

FeSpace build_space(SpaceKind kind, const TriMesh& mesh, PartnerPolicy policy = PartnerPolicy::require_interior);

/// +1 if local edge k of triangle t runs from the lower to the higher global
/// vertex id when traversed as (local k+1 -> local k+2), otherwise -1.
int edge_sign(const TriMesh& mesh, Index t, int k);

/// Global Whitney form of edge tri_edges[t][k], oriented lower -> higher vertex id,
/// restricted to triangle t.
LocalField<double> whitney_on(const TriMesh& mesh, Index t, int k);

/// Global tangential edge bubble 6 l_lo l_hi (x_hi - x_lo) restricted to triangle t.
LocalField<double> edge_bubble_on(const TriMesh& mesh, Index t, int k);

/// Global normal edge bubble 6 l_lo l_hi rot90(x_hi - x_lo) restricted to triangle t.
LocalField<double> normal_bubble_on(const TriMesh& mesh, Index t, int k);

/// Completes Whitney coefficients so that curl z = 0 on every boundary triangle.
/// Interior-edge entries of `coeffs` are kept; boundary-edge entries are
/// overwritten. On a triangle with two boundary edges the minimum-norm
/// correction is used.
VectorXd z0_boundary_coeffs(const TriMesh& mesh, const VectorXd& coeffs);

/// Constant curl of each Whitney form of triangle t, indexed by local edge.
std::array<double, 3> whitney_curls(const TriMesh& mesh, Index t);

/// Whitney coefficients of grad q for nodal values q: coefficient on (lo, hi) is q_hi - q_lo.
VectorXd gradient_whitney_coeffs(const TriMesh& mesh, const VectorXd& q);

/// L^2_0 deflation for the P1 pressure space: m_i = integral of phi_i.
struct MeanZeroProjector {
  VectorXd m;
  double measure = 0.0;

  VectorXd project(const VectorXd& q) const { return q - VectorXd::Constant(q.size(), m.dot(q) / measure); }
  double mean(const VectorXd& q) const { return m.dot(q) / measure; }
};

MeanZeroProjector mean_zero_projector(const FeSpace& Q, const TriMesh& mesh);

}  // namespace stokes
