#include "stokes/infsup.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace stokes {

EpsNormContext eps_norm_context(double eps, const SparseMatrix& M, const SparseMatrix& K, const SparseMatrix& Mp,
                                const SparseMatrix& Kp) {
  if (!(eps > 0.0)) throw LinalgError("eps_norm_context: eps must be positive");
  if (M.rows() != K.rows() || Mp.rows() != Kp.rows()) throw LinalgError("eps_norm_context: size mismatch");
  EpsNormContext c;
  c.eps = eps;
  c.M = M;
  c.K = K;
  c.Mp = Mp;
  c.Kp = Kp;
  c.H = Kp + Mp;
  c.m = Mp * VectorXd::Ones(Mp.rows());
  return c;
}

EpsNormContext eps_norm_context(double eps, const MixedSpaces& spaces, const TriMesh& mesh) {
  return eps_norm_context(eps, assemble(MatrixKind::mass_v, spaces, mesh), assemble(MatrixKind::stiff_v, spaces, mesh),
                          assemble(MatrixKind::mass_p, spaces, mesh), assemble(MatrixKind::stiff_p, spaces, mesh));
}

MatrixXd EpsNormContext::sum_norm_matrix() const {
  const SpdSolver s = factorize_spd(SparseMatrix(eps * eps * H + Mp));
  const MatrixXd X = s.solve(MatrixXd(H));
  const MatrixXd N = MatrixXd(Mp) * X;
  return 0.5 * (N + N.transpose());
}

double intersection_norm(const VectorXd& v, double eps, const SparseMatrix& M, const SparseMatrix& K) {
  if (v.size() != M.rows() || v.size() != K.rows()) throw LinalgError("intersection_norm: size mismatch");
  return std::sqrt(v.dot(M * v) + eps * eps * v.dot(K * v));
}

SumSplit sum_split(const VectorXd& q, double eps, const SparseMatrix& H, const SparseMatrix& Mp) {
  if (q.size() != H.rows() || q.size() != Mp.rows()) throw LinalgError("sum_norm: size mismatch");
  if (!(eps > 0.0)) throw LinalgError("sum_norm: eps must be positive");
  const double e2 = eps * eps;
  const SpdSolver s = factorize_spd(SparseMatrix(e2 * H + Mp));
  SumSplit r;
  r.q1 = s.solve(VectorXd(Mp * q));
  r.q2 = q - r.q1;
  const double v = r.q1.dot(H * r.q1) + r.q2.dot(Mp * r.q2) / e2;
  r.norm = std::sqrt(std::max(v, 0.0));
  return r;
}

SumSplit sum_split(const VectorXd& q, const EpsNormContext& ctx) {
  if (q.size() != ctx.Mp.rows()) throw LinalgError("sum_norm: size mismatch");
  if (std::abs(ctx.m.dot(q)) > 1e-10 * ctx.m.norm() * q.norm()) throw LinalgError("sum_norm: pressure is not mean-zero");
  return sum_split(q, ctx.eps, ctx.H, ctx.Mp);
}

double sum_norm(const VectorXd& q, double eps, const EpsNormContext& ctx) {
  if (eps == ctx.eps) return sum_split(q, ctx).norm;
  EpsNormContext c = ctx;
  c.eps = eps;
  return sum_split(q, c).norm;
}

InfSupResult discrete_infsup_full(double eps, const MixedSpaces& spaces, const TriMesh& mesh) {
  const EpsNormContext ctx = eps_norm_context(eps, spaces, mesh);
  const SparseMatrix B = assemble(MatrixKind::div, spaces, mesh);
  const Index np = B.rows();
  const MatrixXd Z = complement_basis(ctx.m);
  const SpdSolver a = factorize_spd(SparseMatrix(ctx.M + eps * eps * ctx.K));
  const MatrixXd BtZ = MatrixXd(B.transpose()) * Z;
  MatrixXd S = BtZ.transpose() * a.solve(BtZ);
  S = 0.5 * (S + S.transpose());
  MatrixXd N = Z.transpose() * ctx.sum_norm_matrix() * Z;
  N = 0.5 * (N + N.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(S, N, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw LinalgError("discrete_infsup: N_eps is singular on the mean-zero space");
  const VectorXd ev = es.eigenvalues();
  InfSupResult r;
  r.pressure_dim = np;
  r.alpha = std::sqrt(std::max(ev.minCoeff(), 0.0));
  r.alpha_max = std::sqrt(std::max(ev.maxCoeff(), 0.0));
  return r;
}

double discrete_infsup(double eps, const MixedSpaces& spaces, const TriMesh& mesh) {
  return discrete_infsup_full(eps, spaces, mesh).alpha;
}

}  // namespace stokes
