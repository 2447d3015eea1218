#pragma once

#include "stokes/assembly.hpp"
#include "stokes/linalg.hpp"

namespace stokes {

/// Matrices for the eps-dependent norms. H = K_p + M_p is the full H^1 norm on pressures.
struct EpsNormContext {
  double eps = 1.0;
  SparseMatrix M, K;    // velocity, free dofs
  SparseMatrix Mp, Kp;  // pressure
  SparseMatrix H;
  VectorXd m;  // m_i = int phi_i

  /// Dense N_eps = (H^-1 + eps^2 M_p^-1)^-1, evaluated as M_p (eps^2 H + M_p)^-1 H.
  MatrixXd sum_norm_matrix() const;
};

EpsNormContext eps_norm_context(double eps, const MixedSpaces& spaces, const TriMesh& mesh);
EpsNormContext eps_norm_context(double eps, const SparseMatrix& M, const SparseMatrix& K, const SparseMatrix& Mp,
                                const SparseMatrix& Kp);

/// sqrt(v^T M v + eps^2 v^T K v).
double intersection_norm(const VectorXd& v, double eps, const SparseMatrix& M, const SparseMatrix& K);

struct SumSplit {
  VectorXd q1, q2;
  double norm = 0.0;
};

/// inf over q1 + q2 = q of ||q1||_{H^1}^2 + eps^-2 ||q2||^2, from
/// (eps^2 H + M_p) q1 = M_p q. Rejects q with nonzero mean.
SumSplit sum_split(const VectorXd& q, const EpsNormContext& ctx);
/// Same split for arbitrary SPD H and M_p, without the mean-zero restriction.
SumSplit sum_split(const VectorXd& q, double eps, const SparseMatrix& H, const SparseMatrix& Mp);
double sum_norm(const VectorXd& q, double eps, const EpsNormContext& ctx);

struct InfSupResult {
  double alpha = 0.0;
  double alpha_max = 0.0;  // sqrt of the largest eigenvalue (boundedness of b)
  Index pressure_dim = 0;
};

/// alpha^2 = smallest eigenvalue of S_eps q = alpha^2 N_eps q on mean-zero pressures,
/// S_eps = B (M + eps^2 K)^-1 B^T. Dense.
InfSupResult discrete_infsup_full(double eps, const MixedSpaces& spaces, const TriMesh& mesh);
double discrete_infsup(double eps, const MixedSpaces& spaces, const TriMesh& mesh);

}  // namespace stokes
