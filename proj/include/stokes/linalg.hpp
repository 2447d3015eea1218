#pragma once

#include <Eigen/SparseCholesky>

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>

#include "stokes/assembly.hpp"

namespace stokes {

class LinalgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sparse Cholesky solver. With a null vector n the matrix is treated as SPD on
/// the complement of n: right-hand sides are projected onto n-perp, one dof is
/// pinned, and the solution is normalized so that w^T x = 0.
class SpdSolver {
 public:
  SpdSolver() = default;

  Index size() const { return n_; }
  VectorXd solve(const VectorXd& b) const;
  MatrixXd solve(const MatrixXd& B) const;

 private:
  friend SpdSolver factorize_spd(const SparseMatrix&, const std::optional<VectorXd>&, const std::optional<VectorXd>&);

  using Factor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::shared_ptr<const Factor> factor_;
  Index n_ = 0;
  Index pinned_ = -1;
  VectorXd null_;
  VectorXd normal_;
};

/// `null_vec` deflates a one-dimensional kernel; `normalize` (default: null_vec)
/// fixes the representative of the solution.
SpdSolver factorize_spd(const SparseMatrix& A, const std::optional<VectorXd>& null_vec = std::nullopt,
                        const std::optional<VectorXd>& normalize = std::nullopt);

/// diag((M + eps^2 K)^-1, K_p^+ + eps^2 M_p^-1). Pressure residuals are projected
/// onto 1-perp; pressure outputs are mean-zero (m^T x = 0).
class BlockPrecond {
 public:
  BlockPrecond(const SaddleSystem& sys, const SparseMatrix& Kp, const SparseMatrix& Mp);

  double eps() const { return eps_; }
  Index size() const { return nv_ + np_; }
  Index velocity_dim() const { return nv_; }
  Index pressure_dim() const { return np_; }
  VectorXd apply(const VectorXd& r) const;
  VectorXd apply_pressure(const VectorXd& rp) const;
  const VectorXd& pressure_mass_vector() const { return m_; }

  const SpdSolver& velocity_solver() const { return velocity_; }
  const SpdSolver& pressure_lap_solver() const { return lap_; }
  const SpdSolver& pressure_mass_solver() const { return mass_; }

 private:
  double eps_ = 1.0;
  Index nv_ = 0, np_ = 0;
  VectorXd m_;
  SpdSolver velocity_, lap_, mass_;
};

struct SpectrumExtremes {
  double min_abs = 0.0;
  double max_abs = 0.0;
  double min_eig = 0.0;  // signed extremes (dense path only; NaN otherwise)
  double max_eig = 0.0;
  int iterations = 0;     // Lanczos steps, 0 for the dense path

  double condition() const { return max_abs / min_abs; }
};

/// Dense path: extremes of |lambda| for B A, B SPD. With `deflate` = d, B is
/// only required to be SPD on d-perp and A is restricted accordingly.
SpectrumExtremes eig_extremes_sym(const MatrixXd& A, const MatrixXd& B, const std::optional<VectorXd>& deflate = std::nullopt);

using LinearMap = std::function<VectorXd(const VectorXd&)>;

struct LanczosOptions {
  int max_iter = 2000;
  double tol = 1e-10;         // relative Ritz residual bound on the squared operator
  unsigned seed = 20240611u;  // start vector
  bool squared = true;        // run on (BA)^2 so both |lambda| extremes are exterior
};

/// Sparse path: Lanczos with full reorthogonalization for B A, where A maps
/// primal to dual vectors and B (SPD) maps dual to primal. `project` restricts
/// dual vectors to the deflated subspace (identity if empty).
SpectrumExtremes eig_extremes_lanczos(Index n, const LinearMap& A, const LinearMap& B, const LinearMap& project = {},
                                      const LanczosOptions& opts = {});

enum class SpectrumMethod { automatic, dense, schur, lanczos };

struct ConditionOptions {
  SpectrumMethod method = SpectrumMethod::automatic;  // automatic: dense up to dense_limit, else schur
  Index dense_limit = 1200;
  LanczosOptions lanczos;
};

/// Pressure Schur reduction: the eigenvalues of B_eps A_eps other than 1 are
/// (1 +- sqrt(1 + 4 mu)) / 2 with mu in the spectrum of P S, S = B A^-1 B^T on 1-perp.
SpectrumExtremes schur_spectrum(const SaddleSystem& sys, const BlockPrecond& P);

/// max|lambda| / min|lambda| of B_eps A_eps with the constant-pressure mode deflated.
SpectrumExtremes preconditioned_spectrum(const SaddleSystem& sys, const BlockPrecond& P, const ConditionOptions& opts = {});
double condition_number(const SaddleSystem& sys, const BlockPrecond& P, const ConditionOptions& opts = {});

/// Dense representation of the block preconditioner (symmetric on the deflated space).
MatrixXd dense_preconditioner(const BlockPrecond& P);

/// Solves A_eps (u, p) = (f, g) with m^T p = 0 via a bordered sparse LU.
VectorXd solve_saddle(const SaddleSystem& sys, const VectorXd& pressure_mass, const VectorXd& rhs);

/// Orthonormal basis of the complement of d.
MatrixXd complement_basis(const VectorXd& d);

}  // namespace stokes
