#pragma once

#include <Eigen/SparseLU>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stokes/assembly.hpp"
#include "stokes/linalg.hpp"

namespace stokes {

/// P2 vector fields on the once-refined mesh, with homogeneous Dirichlet
/// conditions. Every fine triangle lies in exactly one coarse triangle.
struct SampleSpace {
  TriMesh fine;
  MixedSpaces spaces;                  // Taylor-Hood pair on `fine`; only the velocity is used
  std::vector<Index> parent;           // fine triangle -> coarse triangle
  std::vector<Eigen::Matrix3d> embed;  // embed[t](i, k) = coarse l_i at fine vertex k of t

  const FeSpace& velocity() const { return spaces.velocity; }
  Index dim() const { return spaces.velocity.dim(); }
};

SampleSpace build_sample_space(const TriMesh& coarse);

/// Clement interpolant onto coarse P1: the value at an interior vertex is the
/// patchwise L^2 projection onto linears evaluated at the vertex, boundary
/// values are 0. Scalar matrix, coarse vertices x fine P2 nodes (unconstrained).
SparseMatrix clement(const TriMesh& coarse, const SampleSpace& sample);

/// Bubble coefficients c_T = int_T v for sample fields (rows 2 t + c, free sample columns).
SparseMatrix mini_bubble_moments(const TriMesh& coarse, const SampleSpace& sample);

/// Same moments for coarse P1 vector fields (rows 2 t + c, unconstrained p1_vec columns).
SparseMatrix p1_bubble_moments(const TriMesh& coarse);

/// Whitney/P2 cross Gram: W(e, j) = int phi_e . u_j for the unconstrained p2_vec dofs of the same mesh.
SparseMatrix whitney_p2_gram(const TriMesh& mesh);

/// Whitney mass matrix on all edges.
SparseMatrix whitney_mass(const TriMesh& mesh);

/// Coarse Whitney forms against sample fields (free sample columns).
SparseMatrix whitney_sample_gram(const TriMesh& coarse, const SampleSpace& sample);

/// Coarse P1 pressures against div of sample fields: D(q, j) = int div u_j q.
SparseMatrix sample_divergence(const TriMesh& coarse, const SampleSpace& sample);

/// Nodal embedding of P1 vector fields into P2 vector fields (unconstrained dofs).
SparseMatrix p1_to_p2(const TriMesh& mesh);

/// Projection onto the Taylor-Hood bubble space defined by
/// <P u, z> = <u, z> for all z in Z_h^0.
class ThBubbleProjector {
 public:
  explicit ThBubbleProjector(const TriMesh& mesh);

  Index dim() const { return static_cast<Index>(bubbles_.cols()); }
  const SparseMatrix& bubble_basis() const { return bubbles_; }  // P2 coordinates
  const SparseMatrix& z0_basis() const { return z0_; }           // Nedelec coordinates
  const SparseMatrix& gram() const { return gram_; }             // G(j, k) = <z_j, v_k>
  const SparseMatrix& whitney_p2() const { return w2_; }

  /// Coefficients x with G x = Z0^T r, r(e) = <phi_e, u> the Whitney moments of u.
  VectorXd coefficients(const VectorXd& whitney_moments) const;
  /// Solves G^T s = y.
  VectorXd transpose_solve(const VectorXd& y) const;
  /// Projection of a P2 field (unconstrained coordinates), returned as bubble coefficients.
  VectorXd project_p2(const VectorXd& u) const;
  /// max |G x - Z0^T r|.
  double residual(const VectorXd& whitney_moments, const VectorXd& x) const;

 private:
  SparseMatrix bubbles_, z0_, gram_, w2_;
  std::shared_ptr<const Eigen::SparseLU<SparseMatrix>> lu_, lu_t_;
};

/// Pi = Pb (I - R) + R from sample fields to the discrete velocity space (free dofs
/// in MixedSpaces numbering). For Taylor-Hood the image lies in V_h^1 + V_h^b.
class FortinOperator {
 public:
  FortinOperator(Element element, const TriMesh& coarse);

  Element element() const { return element_; }
  const TriMesh& coarse() const { return coarse_; }
  const MixedSpaces& spaces() const { return spaces_; }
  const SampleSpace& sample() const { return sample_; }
  Index input_dim() const { return sample_.dim(); }
  Index output_dim() const { return spaces_.velocity_dim(); }

  const SparseMatrix& coarse_divergence() const { return div_coarse_; }
  const SparseMatrix& sample_divergence_matrix() const { return div_sample_; }
  const SparseMatrix& sample_mass() const { return mass_in_; }
  const SparseMatrix& sample_h1() const { return h1_in_; }
  const SparseMatrix& coarse_mass() const { return mass_out_; }
  const SparseMatrix& coarse_h1() const { return h1_out_; }

  /// Clement part on free dofs: free p1_vec (Mini) or free p2_vec (Taylor-Hood) rows.
  const SparseMatrix& clement_part() const { return r_out_; }
  /// Clement matrix, unconstrained p1_vec rows x free sample columns.
  const SparseMatrix& clement_vec() const { return r_; }

  VectorXd apply(const VectorXd& v) const;
  VectorXd apply_transpose(const VectorXd& y) const;

 private:
  Element element_;
  TriMesh coarse_;
  MixedSpaces spaces_;
  SampleSpace sample_;
  SparseMatrix r_;      // p1_vec (all dofs) x sample
  SparseMatrix r_out_;  // E_1 R restricted to free output dofs
  SparseMatrix local_;  // explicit part of Pi
  // Taylor-Hood bubble part: bubble_out_ G^-1 Z0^T defect_
  std::optional<ThBubbleProjector> th_;
  SparseMatrix defect_;       // W_S - W_2 E_1 R
  SparseMatrix bubble_out_;   // bubble basis on free p2 dofs
  SparseMatrix div_coarse_, div_sample_, mass_in_, h1_in_, mass_out_, h1_out_;
};

/// max_q |<div (Pi v - v), q>| / ||v||_{H^1} over all coarse P1 basis functions q.
double commuting_residual(const FortinOperator& pi, const VectorXd& v);

struct OperatorNorms {
  double l2 = 0.0;
  double h1 = 0.0;
  int iterations = 0;
};

/// sqrt of lambda_max of Pi^T N_out Pi x = lambda N_in x (Lanczos).
double operator_norm(Index n, const LinearMap& pi, const LinearMap& pi_t, const SparseMatrix& n_in,
                     const SparseMatrix& n_out, int* iterations = nullptr);

/// L^2 and H^1 (mass + stiffness) norms of Pi over the sample space.
OperatorNorms operator_norms(const FortinOperator& pi);

// ---------------------------------------------------------------------------
// Local lemma matrices

enum class LemmaKind { interior_M, boundary1, Mminus, macro_M };

struct LemmaResult {
  MatrixXd M;
  double area = 0.0;        // |T|, |T-| for Mminus
  double lambda_min = 0.0;  // of the symmetric part
  double bound = 0.0;       // claimed lower bound for lambda_min
  double asymmetry = 0.0;   // max |M - M^T|
};

/// Macroelement parameters and fields. T is the boundary triangle with local
/// vertices (x0, x1, x2); T- is the partner with local vertices (x1, x2, x3).
struct MacroFields {
  double beta = 0.0;
  double gamma = 1.0;
  double alpha = 0.0;  // 1 - hat l1(hat x0) - hat l2(hat x0)
  std::array<double, 2> hat_l{0.0, 0.0};
  TriangleGeometry<double> T, Tm;
  std::array<LocalField<double>, 2> psi_T, psi_Tm;    // psi_i
  std::array<LocalField<double>, 2> psim_T, psim_Tm;  // psi_i^-
  std::array<LocalField<double>, 2> phi_T, phi_Tm;    // phi_i
  std::array<LocalField<double>, 2> phim_Tm;          // phi_i^-, zero on T
};

double macro_beta(double area_T, double area_Tm);
MacroFields macro_fields(const TriMesh& mesh, const Macroelement& m, std::optional<double> beta = std::nullopt);

/// interior_M and boundary1 take a triangle, Mminus and macro_M a macroelement.
LemmaResult lemma_matrix(LemmaKind kind, const TriMesh& mesh, Index tri);
LemmaResult lemma_matrix(LemmaKind kind, const TriMesh& mesh, const Macroelement& m);

/// max_{i,j} |int_{T*} psi_i^- . phi_j|.
double orth_check(const TriMesh& mesh, const Macroelement& m, std::optional<double> beta = std::nullopt);

/// Local matrix L(a, b) = int_{T*} psi_a . Phi~(psi_b) for (psi_1, psi_2, psi_1^-, psi_2^-),
/// where Phi~ scales the images of psi_1, psi_2 by C.
MatrixXd macro_local_matrix(const MacroFields& f, double C);

struct MacroScaling {
  double C = 1.0;
  double lower_bound = 0.0;  // lambda_min(sym L) / |T*|
};

/// Smallest power of two C >= 1 with sym L positive definite.
MacroScaling macro_scaling(const MacroFields& f);

/// Phi~ in the macroelement basis of V_h^b: columns of `bubbles` (P2 coordinates)
/// are mapped to the columns of `images` (Nedelec coordinates).
struct PhiMap {
  SparseMatrix bubbles;
  SparseMatrix images;
  std::vector<Macroelement> macros;
  std::vector<MacroScaling> scaling;
  std::vector<double> beta, gamma;
  std::vector<Index> edge;  // edge carrying each column
};

PhiMap phi_map(const TriMesh& mesh);

struct BubbleInfSup {
  double c0 = 0.0;         // inf_v sup_z <v, z> / (||v|| ||z||) over V_h^b x Z_h^0
  double c0_eig = 0.0;     // same constant from the generalized eigenproblem
  double phi_bound = 0.0;  // lower bound of <v, Phi~ v> / (||v|| ||Phi~ v||)
  double sigma_min_gram = 0.0;  // smallest singular value of the unscaled G
};

/// Dense evaluation; intended for levels <= 4.
BubbleInfSup bubble_infsup(const TriMesh& mesh);

struct NormEquivalence {
  double v_min = 0.0, v_max = 0.0;  // ||v||^2 / sum_T |T|^2 sum a_e^2
  double z_min = 0.0, z_max = 0.0;  // ||Phi v||^2 / sum_T sum a_e^2
};

NormEquivalence norm_equivalence(const TriMesh& mesh, const PhiMap& phi);

// ---------------------------------------------------------------------------
// Check suites

struct LemmaCheck {
  std::string name;
  Index count = 0;          // elements or macroelements visited
  double max_error = 0.0;   // relative to the local area
  double min_margin = 0.0;  // smallest (measured - bound) / bound, inequality checks only
  bool inequality = false;
  bool passed = true;
};

/// All local identities and bounds on every element and macroelement of `mesh`
/// (boundary partners allowed). `tol` is relative.
std::vector<LemmaCheck> lemma_suite(const TriMesh& mesh, double tol = 1e-13);

struct DimensionIdentity {
  Index bubble_dim = 0;  // dim V_h^b
  Index z0_dim = 0;      // dim Z_h^0
  Index two_boundary_tris = 0;
  bool holds() const { return bubble_dim == z0_dim; }
};

DimensionIdentity dimension_identity(const TriMesh& mesh);

struct FortinReport {
  double commuting = 0.0;  // max residual over the random fields
  double transpose_defect = 0.0;
  OperatorNorms norms;
  std::optional<DimensionIdentity> dims;  // Taylor-Hood only
  bool passed(double tol = 1e-10) const { return commuting < tol && (!dims || dims->holds()); }
};

/// Commuting residual on `samples` random sample fields (fixed seed) plus operator norms.
FortinReport fortin_report(Element element, const TriMesh& mesh, int samples = 20, unsigned seed = 20240611u,
                           bool with_norms = true);

}  // namespace stokes
