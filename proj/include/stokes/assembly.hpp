#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>

#include "stokes/spaces.hpp"

namespace stokes {

enum class Element { taylor_hood, mini };

std::string_view to_string(Element e);
Element parse_element(std::string_view name);

/// Velocity/pressure pair. Velocity free dofs are numbered as the free dofs of
/// `velocity` followed (Mini) by all dofs of `bubble`.
struct MixedSpaces {
  Element element = Element::taylor_hood;
  FeSpace velocity;               // p2_vec (Taylor-Hood) or p1_vec (Mini)
  std::optional<FeSpace> bubble;  // mini_bubble_vec
  FeSpace pressure;               // p1_scalar

  Index velocity_dim() const { return velocity.dim() + (bubble ? bubble->dim() : 0); }
  Index velocity_dofs() const { return velocity.n_dofs + (bubble ? bubble->n_dofs : 0); }
  Index pressure_dim() const { return pressure.dim(); }
};

MixedSpaces build_mixed_spaces(Element element, const TriMesh& mesh);

enum class MatrixKind { mass_v, stiff_v, div, mass_p, stiff_p };

struct AssemblyOptions {
  bool eliminate_dirichlet = true;  // velocity rows/columns of constrained dofs are dropped
  int threads = 1;                  // element loop workers; result is identical for any count
};

/// Exact global matrices. div has pressure rows and velocity columns:
/// B(q, v) = <div v, q>.
SparseMatrix assemble(MatrixKind kind, const MixedSpaces& spaces, const TriMesh& mesh, const AssemblyOptions& opts = {});

/// A_eps = [[M + eps^2 K, B^T], [B, 0]] on free velocity dofs and all pressure dofs.
struct SaddleSystem {
  SparseMatrix M;
  SparseMatrix K;
  SparseMatrix B;
  double eps = 1.0;
  VectorXd null_vec;  // (0, 1_p)

  Index velocity_dim() const { return M.rows(); }
  Index pressure_dim() const { return B.rows(); }
  Index size() const { return velocity_dim() + pressure_dim(); }
  SparseMatrix velocity_block() const;
  SparseMatrix matrix() const;
};

SaddleSystem build_saddle(double eps, const MixedSpaces& spaces, const TriMesh& mesh, const AssemblyOptions& opts = {});

/// Coordinate text export, one "row col value" line per stored entry.
void write_coo(std::ostream& os, const SparseMatrix& A);

/// Scalar reference data for one local basis family, independent of the triangle:
///   mass(a, b)           = int phi_a phi_b / |T|
///   stiff[a][b](k, l)    = int d_k phi_a d_l phi_b / |T|
///   div_p1[q][a](k)      = int l_q d_k phi_a / |T|
struct ReferenceTables {
  std::vector<BaryPoly<double>> basis;
  MatrixXd mass;
  std::vector<std::vector<Eigen::Matrix3d>> stiff;
  std::vector<std::vector<Eigen::Vector3d>> div_p1;

  explicit ReferenceTables(std::vector<BaryPoly<double>> b);
};

const ReferenceTables& p2_reference();
const ReferenceTables& p1_reference();
/// P1 followed by the unnormalized bubble 60 l1 l2 l3 (scaled by 1/|T| per element).
const ReferenceTables& mini_reference();

/// Element-level scalar matrices for a basis family on triangle t, with per-function scale factors.
MatrixXd element_mass(const ReferenceTables& ref, const TriangleGeometry<double>& g, const VectorXd& scale);
MatrixXd element_stiffness(const ReferenceTables& ref, const TriangleGeometry<double>& g, const VectorXd& scale);

}  // namespace stokes
