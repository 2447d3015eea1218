#include "stokes/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <random>

namespace stokes {

namespace {

SparseMatrix drop_row_col(const SparseMatrix& A, Index p) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(A.nonZeros()));
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
      if (it.row() == p || it.col() == p) continue;
      trip.emplace_back(it.row() - (it.row() > p ? 1 : 0), it.col() - (it.col() > p ? 1 : 0), it.value());
    }
  SparseMatrix R(A.rows() - 1, A.cols() - 1);
  R.setFromTriplets(trip.begin(), trip.end());
  return R;
}

}  // namespace

SpdSolver factorize_spd(const SparseMatrix& A, const std::optional<VectorXd>& null_vec, const std::optional<VectorXd>& normalize) {
  if (A.rows() != A.cols()) throw LinalgError("factorize_spd: matrix not square");
  SpdSolver s;
  s.n_ = A.rows();
  SparseMatrix work = A;
  if (null_vec) {
    if (null_vec->size() != A.rows()) throw LinalgError("factorize_spd: null vector size mismatch");
    s.null_ = *null_vec;
    s.normal_ = normalize ? *normalize : *null_vec;
    null_vec->cwiseAbs().maxCoeff(&s.pinned_);
    work = drop_row_col(A, s.pinned_);
  }
  auto f = std::make_shared<SpdSolver::Factor>();
  f->compute(work);
  if (f->info() != Eigen::Success) throw LinalgError("factorize_spd: non-positive pivot, matrix is not positive definite");
  s.factor_ = std::move(f);
  return s;
}

VectorXd SpdSolver::solve(const VectorXd& b) const {
  if (b.size() != n_) throw LinalgError("SpdSolver::solve: size mismatch");
  if (pinned_ < 0) return factor_->solve(b);
  const VectorXd bp = b - null_ * (null_.dot(b) / null_.squaredNorm());
  VectorXd r(n_ - 1);
  r.head(pinned_) = bp.head(pinned_);
  r.tail(n_ - 1 - pinned_) = bp.tail(n_ - 1 - pinned_);
  const VectorXd y = factor_->solve(r);
  VectorXd x(n_);
  x.head(pinned_) = y.head(pinned_);
  x(pinned_) = 0.0;
  x.tail(n_ - 1 - pinned_) = y.tail(n_ - 1 - pinned_);
  return x - null_ * (normal_.dot(x) / normal_.dot(null_));
}

MatrixXd SpdSolver::solve(const MatrixXd& B) const {
  MatrixXd X(B.rows(), B.cols());
  for (Index j = 0; j < B.cols(); ++j) X.col(j) = solve(VectorXd(B.col(j)));
  return X;
}

BlockPrecond::BlockPrecond(const SaddleSystem& sys, const SparseMatrix& Kp, const SparseMatrix& Mp)
    : eps_(sys.eps), nv_(sys.velocity_dim()), np_(sys.pressure_dim()) {
  if (Kp.rows() != np_ || Mp.rows() != np_) throw LinalgError("BlockPrecond: pressure matrices do not match system");
  m_ = Mp * VectorXd::Ones(np_);
  velocity_ = factorize_spd(sys.velocity_block());
  lap_ = factorize_spd(Kp, VectorXd::Ones(np_), m_);
  mass_ = factorize_spd(Mp);
}

VectorXd BlockPrecond::apply_pressure(const VectorXd& rp) const {
  const VectorXd r = rp.array() - rp.mean();
  return lap_.solve(r) + (eps_ * eps_) * mass_.solve(r);
}

VectorXd BlockPrecond::apply(const VectorXd& r) const {
  if (r.size() != size()) throw LinalgError("BlockPrecond::apply: size mismatch");
  VectorXd x(size());
  x.head(nv_) = velocity_.solve(VectorXd(r.head(nv_)));
  x.tail(np_) = apply_pressure(r.tail(np_));
  return x;
}

MatrixXd complement_basis(const VectorXd& d) {
  const Index n = d.size();
  Eigen::HouseholderQR<MatrixXd> qr(d);
  const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, n);
  return Q.rightCols(n - 1);
}

SpectrumExtremes eig_extremes_sym(const MatrixXd& A, const MatrixXd& B, const std::optional<VectorXd>& deflate) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw LinalgError("eig_extremes_sym: size mismatch");
  MatrixXd Ar, S;
  if (deflate) {
    if (deflate->size() != A.rows()) throw LinalgError("eig_extremes_sym: deflation vector size mismatch");
    const MatrixXd Q = complement_basis(*deflate);
    Ar = Q.transpose() * A * Q;
    S = Q.transpose() * B * Q;
  } else {
    Ar = A;
    S = B;
  }
  S = 0.5 * (S + S.transpose());
  Ar = 0.5 * (Ar + Ar.transpose());
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw LinalgError("eig_extremes_sym: inner operator not positive definite");
  const MatrixXd L = llt.matrixL();
  MatrixXd C = L.transpose() * Ar * L;
  C = 0.5 * (C + C.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(C, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw LinalgError("eig_extremes_sym: eigensolver breakdown");
  const VectorXd ev = es.eigenvalues();
  SpectrumExtremes r;
  r.min_abs = ev.cwiseAbs().minCoeff();
  r.max_abs = ev.cwiseAbs().maxCoeff();
  r.min_eig = ev.minCoeff();
  r.max_eig = ev.maxCoeff();
  if (!(r.min_abs > 0.0)) throw LinalgError("eig_extremes_sym: singular operator after deflation");
  return r;
}

SpectrumExtremes eig_extremes_lanczos(Index n, const LinearMap& A, const LinearMap& B, const LinearMap& project,
                                      const LanczosOptions& opts) {
  auto proj = [&](VectorXd v) { return project ? project(v) : v; };
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  VectorXd r(n);
  for (Index i = 0; i < n; ++i) r(i) = normal(rng);
  r = proj(r);

  const Index kmax = std::min<Index>(opts.max_iter, n);
  MatrixXd Qd(n, std::min<Index>(kmax + 1, 64));  // dual Lanczos vectors
  MatrixXd Qp(n, Qd.cols());                      // their images under B
  std::vector<double> alpha, beta;

  VectorXd p = B(r);
  double b0 = std::sqrt(r.dot(p));
  if (!(b0 > 0.0)) throw LinalgError("eig_extremes_lanczos: start vector in kernel");
  Qd.col(0) = r / b0;
  Qp.col(0) = p / b0;

  SpectrumExtremes out;
  out.min_eig = out.max_eig = std::numeric_limits<double>::quiet_NaN();
  double theta_min = 0.0, theta_max = 0.0;
  bool converged = false;
  Index k = 0;
  for (; k < kmax; ++k) {
    const VectorXd pk = Qp.col(k);
    VectorXd w = proj(A(pk));
    if (opts.squared) w = proj(A(B(w)));
    const double a = w.dot(pk);
    alpha.push_back(a);
    w -= a * Qd.col(k);
    if (k > 0) w -= beta.back() * Qd.col(k - 1);
    for (int pass = 0; pass < 2; ++pass) {
      const VectorXd c = Qp.leftCols(k + 1).transpose() * w;
      w -= Qd.leftCols(k + 1) * c;
    }
    w = proj(w);
    VectorXd pw = B(w);
    const double bnext = std::sqrt(std::max(0.0, w.dot(pw)));

    const Index m = k + 1;
    const bool check = m == kmax || bnext < 1e-300 || (m >= 8 && m % 4 == 0);
    if (check) {
      VectorXd diag = Eigen::Map<const VectorXd>(alpha.data(), m);
      VectorXd sub = m > 1 ? VectorXd(Eigen::Map<const VectorXd>(beta.data(), m - 1)) : VectorXd();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es;
      es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      const VectorXd& th = es.eigenvalues();
      theta_min = th(0);
      theta_max = th(m - 1);
      const double res_min = bnext * std::abs(es.eigenvectors()(m - 1, 0));
      const double res_max = bnext * std::abs(es.eigenvectors()(m - 1, m - 1));
      const double scale_min = opts.squared ? std::abs(theta_min) : std::abs(theta_max);
      if (bnext < 1e-300 || (res_min <= opts.tol * scale_min && res_max <= opts.tol * std::abs(theta_max))) {
        converged = true;
        ++k;
        break;
      }
    }
    if (m == kmax) {
      ++k;
      break;
    }
    if (Qd.cols() < m + 1) {
      const Index grow = std::min<Index>(kmax + 1, 2 * Qd.cols());
      Qd.conservativeResize(Eigen::NoChange, grow);
      Qp.conservativeResize(Eigen::NoChange, grow);
    }
    beta.push_back(bnext);
    Qd.col(m) = w / bnext;
    Qp.col(m) = pw / bnext;
  }
  if (!converged && k < n) throw LinalgError("eig_extremes_lanczos: no convergence");
  out.iterations = static_cast<int>(k);
  if (opts.squared) {
    if (!(theta_min > 0.0)) throw LinalgError("eig_extremes_lanczos: singular operator after deflation");
    out.min_abs = std::sqrt(theta_min);
    out.max_abs = std::sqrt(theta_max);
  } else {
    out.min_abs = std::abs(theta_min);
    out.max_abs = std::max(std::abs(theta_min), std::abs(theta_max));
    out.min_eig = theta_min;
    out.max_eig = theta_max;
  }
  return out;
}

MatrixXd dense_preconditioner(const BlockPrecond& P) {
  const Index n = P.size(), nv = P.velocity_dim(), np = P.pressure_dim();
  MatrixXd D = MatrixXd::Zero(n, n);
  D.topLeftCorner(nv, nv) = P.velocity_solver().solve(MatrixXd(MatrixXd::Identity(nv, nv)));
  for (Index j = 0; j < np; ++j) D.block(nv, nv + j, np, 1) = P.apply_pressure(VectorXd::Unit(np, j));
  return D;
}

SpectrumExtremes schur_spectrum(const SaddleSystem& sys, const BlockPrecond& P) {
  if (P.size() != sys.size()) throw LinalgError("schur_spectrum: preconditioner does not match system");
  const Index nv = sys.velocity_dim(), np = sys.pressure_dim();
  const MatrixXd Q = complement_basis(VectorXd::Ones(np));
  const MatrixXd BtQ = MatrixXd(sys.B.transpose()) * Q;
  const MatrixXd X = P.velocity_solver().solve(BtQ);
  const MatrixXd S = BtQ.transpose() * X;
  MatrixXd PQ(np, np - 1);
  for (Index j = 0; j < np - 1; ++j) PQ.col(j) = P.apply_pressure(VectorXd(Q.col(j)));
  const MatrixXd Pp = Q.transpose() * PQ;
  const SpectrumExtremes mu = eig_extremes_sym(S, Pp);
  if (!(mu.min_eig > 0.0)) throw LinalgError("schur_spectrum: divergence operator is not surjective onto 1-perp");
  SpectrumExtremes r;
  r.max_eig = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * mu.max_eig));
  r.min_eig = 0.5 * (1.0 - std::sqrt(1.0 + 4.0 * mu.max_eig));
  r.max_abs = r.max_eig;
  r.min_abs = 0.5 * (std::sqrt(1.0 + 4.0 * mu.min_eig) - 1.0);
  if (nv > np - 1) r.min_abs = std::min(r.min_abs, 1.0);
  return r;
}

SpectrumExtremes preconditioned_spectrum(const SaddleSystem& sys, const BlockPrecond& P, const ConditionOptions& opts) {
  if (P.size() != sys.size()) throw LinalgError("condition_number: preconditioner does not match system");
  const SparseMatrix A = sys.matrix();
  const Index n = sys.size(), nv = sys.velocity_dim(), np = sys.pressure_dim();
  SpectrumMethod method = opts.method;
  if (method == SpectrumMethod::automatic)
    method = n <= opts.dense_limit ? SpectrumMethod::dense : SpectrumMethod::schur;
  if (method == SpectrumMethod::dense) return eig_extremes_sym(MatrixXd(A), dense_preconditioner(P), sys.null_vec);
  if (method == SpectrumMethod::schur) return schur_spectrum(sys, P);
  auto apply_A = [&](const VectorXd& x) -> VectorXd { return A * x; };
  auto apply_B = [&](const VectorXd& r) { return P.apply(r); };
  auto project = [&](const VectorXd& r) {
    VectorXd s = r;
    s.tail(np).array() -= r.tail(np).mean();
    return s;
  };
  (void)nv;
  return eig_extremes_lanczos(n, apply_A, apply_B, project, opts.lanczos);
}

double condition_number(const SaddleSystem& sys, const BlockPrecond& P, const ConditionOptions& opts) {
  return preconditioned_spectrum(sys, P, opts).condition();
}

VectorXd solve_saddle(const SaddleSystem& sys, const VectorXd& pressure_mass, const VectorXd& rhs) {
  const Index n = sys.size(), nv = sys.velocity_dim();
  const SparseMatrix A = sys.matrix();
  std::vector<Eigen::Triplet<double>> trip;
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (Index i = 0; i < pressure_mass.size(); ++i) {
    trip.emplace_back(nv + i, n, pressure_mass(i));
    trip.emplace_back(n, nv + i, pressure_mass(i));
  }
  SparseMatrix Ab(n + 1, n + 1);
  Ab.setFromTriplets(trip.begin(), trip.end());
  Ab.makeCompressed();
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(Ab);
  if (lu.info() != Eigen::Success) throw LinalgError("solve_saddle: factorization failed");
  VectorXd b = VectorXd::Zero(n + 1);
  b.head(n) = rhs;
  const VectorXd x = lu.solve(b);
  return x.head(n);
}

}  // namespace stokes
