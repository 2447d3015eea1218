#include "stokes/fortin.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace stokes {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

std::size_t sz(Index i) { return static_cast<std::size_t>(i); }

Index p2_node(const TriMesh& m, Index t, int a) {
  return a < 3 ? m.triangles[sz(t)][static_cast<std::size_t>(a)]
               : m.num_vertices() + m.tri_edges[sz(t)][static_cast<std::size_t>(a - 3)];
}

SparseMatrix from_triplets(Index rows, Index cols, const Triplets& t) {
  SparseMatrix A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

// Rows of the free dofs of s.
SparseMatrix free_selection(const FeSpace& s) {
  Triplets t;
  for (Index i = 0; i < s.dim(); ++i) t.emplace_back(i, s.dof_of_free[sz(i)], 1.0);
  return from_triplets(s.dim(), s.n_dofs, t);
}

// Square (i, j) of the level grid and the side of its diagonal containing p.
Index grid_key(const Point& p, int n) {
  const double s = p(0) * n, r = p(1) * n;
  const int i = static_cast<int>(std::floor(s)), j = static_cast<int>(std::floor(r));
  const int upper = (r - j) > (s - i) ? 1 : 0;
  return (static_cast<Index>(j) * n + i) * 2 + upper;
}

Point centroid(const TriMesh& m, Index t) {
  const auto& tri = m.triangles[sz(t)];
  return (m.vertices[sz(tri[0])] + m.vertices[sz(tri[1])] + m.vertices[sz(tri[2])]) / 3.0;
}

// Q(a, k) = int phi_a l_k / |T| for the P2 basis.
const Eigen::Matrix<double, 6, 3>& p2_p1_moments() {
  static const Eigen::Matrix<double, 6, 3> Q = [] {
    Eigen::Matrix<double, 6, 3> q;
    const auto b = p2_basis<double>();
    for (int a = 0; a < 6; ++a)
      for (int k = 0; k < 3; ++k) q(a, k) = (b[static_cast<std::size_t>(a)] * BaryPoly<double>::lambda(k)).integrate(1.0);
    return q;
  }();
  return Q;
}

SparseMatrix vectorize_columns(const SparseMatrix& scalar, const FeSpace& fine_vel) {
  // scalar: rows r, columns fine P2 nodes -> rows 2 r + c, free fine columns
  Triplets t;
  for (Index k = 0; k < scalar.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(scalar, k); it; ++it)
      for (int c = 0; c < 2; ++c) {
        const Index col = fine_vel.free_of_dof[sz(2 * it.col() + c)];
        if (col >= 0) t.emplace_back(2 * it.row() + c, col, it.value());
      }
  return from_triplets(2 * scalar.rows(), fine_vel.dim(), t);
}

double sym_lambda_min(const MatrixXd& M) {
  const MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

SampleSpace build_sample_space(const TriMesh& coarse) {
  SampleSpace s;
  s.fine = build_mesh(coarse.domain, coarse.level + 1);
  s.spaces = build_mixed_spaces(Element::taylor_hood, s.fine);
  const int n = 1 << coarse.level;
  std::vector<Index> lookup(sz(2 * static_cast<Index>(n) * n), -1);
  for (Index T = 0; T < coarse.num_triangles(); ++T) lookup[sz(grid_key(centroid(coarse, T), n))] = T;
  s.parent.resize(sz(s.fine.num_triangles()));
  s.embed.resize(s.parent.size());
  for (Index t = 0; t < s.fine.num_triangles(); ++t) {
    const Index key = grid_key(centroid(s.fine, t), n);
    const Index T = key >= 0 && key < static_cast<Index>(lookup.size()) ? lookup[sz(key)] : -1;
    if (T < 0) throw MeshError("build_sample_space: fine triangle outside the coarse mesh");
    s.parent[sz(t)] = T;
    const auto g = coarse.geometry(T);
    Eigen::Matrix3d E;
    for (int k = 0; k < 3; ++k) {
      const auto l = g.barycentric(s.fine.vertices[sz(s.fine.triangles[sz(t)][static_cast<std::size_t>(k)])]);
      for (int i = 0; i < 3; ++i) {
        double v = l[static_cast<std::size_t>(i)];
        const double r = std::round(2.0 * v) / 2.0;  // nested grids: values are 0, 1/2, 1
        if (std::abs(v - r) < 1e-12) v = r;
        E(i, k) = v;
      }
    }
    s.embed[sz(t)] = E;
  }
  return s;
}

SparseMatrix clement(const TriMesh& coarse, const SampleSpace& sample) {
  const TriMesh& fine = sample.fine;
  const Index nvc = coarse.num_vertices();
  const Index nodes = fine.num_vertices() + fine.num_edges();
  const auto& Q = p2_p1_moments();
  Eigen::Matrix3d P1mass = Eigen::Matrix3d::Constant(1.0 / 12.0);
  P1mass.diagonal().setConstant(2.0 / 12.0);

  std::vector<Eigen::Matrix3d> gram(sz(nvc), Eigen::Matrix3d::Zero());
  std::vector<std::map<Index, Eigen::Vector3d>> mom(sz(nvc));
  std::vector<int> count(sz(nvc), 0);
  for (Index t = 0; t < fine.num_triangles(); ++t) {
    const Index T = sample.parent[sz(t)];
    const double area = fine.tri_area[sz(t)];
    const auto& ft = fine.triangles[sz(t)];
    for (Index v : coarse.triangles[sz(T)]) {
      ++count[sz(v)];
      if (coarse.boundary_vertex[sz(v)]) continue;
      const Point& xi = coarse.vertices[sz(v)];
      // local linears 1, x - x_i, y - y_i at the fine vertices
      Eigen::Matrix3d P;
      for (int k = 0; k < 3; ++k) {
        const Point& xk = fine.vertices[sz(ft[static_cast<std::size_t>(k)])];
        P(0, k) = 1.0;
        P(1, k) = xk(0) - xi(0);
        P(2, k) = xk(1) - xi(1);
      }
      gram[sz(v)] += area * P * P1mass * P.transpose();
      for (int a = 0; a < 6; ++a) {
        auto [it, fresh] = mom[sz(v)].try_emplace(p2_node(fine, t, a), Eigen::Vector3d::Zero());
        it->second += area * P * Q.row(a).transpose();
      }
    }
  }
  Triplets trip;
  for (Index v = 0; v < nvc; ++v) {
    if (count[sz(v)] == 0) throw MeshError("clement: empty patch at vertex " + std::to_string(v));
    if (coarse.boundary_vertex[sz(v)]) continue;
    const Eigen::Vector3d w = gram[sz(v)].ldlt().solve(Eigen::Vector3d::UnitX());
    for (const auto& [node, m] : mom[sz(v)]) trip.emplace_back(v, node, w.dot(m));
  }
  return from_triplets(nvc, nodes, trip);
}

SparseMatrix mini_bubble_moments(const TriMesh& coarse, const SampleSpace& sample) {
  const TriMesh& fine = sample.fine;
  Triplets trip;
  for (Index t = 0; t < fine.num_triangles(); ++t) {
    const Index T = sample.parent[sz(t)];
    const double w = fine.tri_area[sz(t)] / 3.0;  // vertex functions of P2 have zero mean
    for (int a = 3; a < 6; ++a)
      for (int c = 0; c < 2; ++c) {
        const Index col = sample.velocity().free_of_dof[sz(2 * p2_node(fine, t, a) + c)];
        if (col >= 0) trip.emplace_back(2 * T + c, col, w);
      }
  }
  return from_triplets(2 * coarse.num_triangles(), sample.dim(), trip);
}

SparseMatrix p1_bubble_moments(const TriMesh& coarse) {
  Triplets trip;
  for (Index T = 0; T < coarse.num_triangles(); ++T)
    for (Index v : coarse.triangles[sz(T)])
      for (int c = 0; c < 2; ++c) trip.emplace_back(2 * T + c, 2 * v + c, coarse.tri_area[sz(T)] / 3.0);
  return from_triplets(2 * coarse.num_triangles(), 2 * coarse.num_vertices(), trip);
}

SparseMatrix whitney_p2_gram(const TriMesh& mesh) {
  const auto b = p2_basis<double>();
  const Index n_p2 = 2 * (mesh.num_vertices() + mesh.num_edges());
  Triplets trip;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const double area = mesh.tri_area[sz(t)];
    for (int k = 0; k < 3; ++k) {
      const auto w = whitney_on(mesh, t, k);
      const Index e = mesh.tri_edges[sz(t)][static_cast<std::size_t>(k)];
      for (int a = 0; a < 6; ++a)
        for (int c = 0; c < 2; ++c)
          trip.emplace_back(e, 2 * p2_node(mesh, t, a) + c, (w.comp[static_cast<std::size_t>(c)] * b[static_cast<std::size_t>(a)]).integrate(area));
    }
  }
  return from_triplets(mesh.num_edges(), n_p2, trip);
}

SparseMatrix whitney_mass(const TriMesh& mesh) {
  Triplets trip;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    std::vector<LocalField<double>> w;
    for (int k = 0; k < 3; ++k) w.push_back(whitney_on(mesh, t, k));
    const MatrixXd G = local_gram(w, w, mesh.geometry(t));
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        trip.emplace_back(mesh.tri_edges[sz(t)][static_cast<std::size_t>(k)], mesh.tri_edges[sz(t)][static_cast<std::size_t>(l)], G(k, l));
  }
  return from_triplets(mesh.num_edges(), mesh.num_edges(), trip);
}

SparseMatrix whitney_sample_gram(const TriMesh& coarse, const SampleSpace& sample) {
  const TriMesh& fine = sample.fine;
  const auto b = p2_basis<double>();
  Triplets trip;
  for (Index t = 0; t < fine.num_triangles(); ++t) {
    const Index T = sample.parent[sz(t)];
    const double area = fine.tri_area[sz(t)];
    for (int k = 0; k < 3; ++k) {
      const auto w = whitney_on(coarse, T, k).substitute(sample.embed[sz(t)]);
      const Index e = coarse.tri_edges[sz(T)][static_cast<std::size_t>(k)];
      for (int a = 0; a < 6; ++a)
        for (int c = 0; c < 2; ++c) {
          const Index col = sample.velocity().free_of_dof[sz(2 * p2_node(fine, t, a) + c)];
          if (col >= 0) trip.emplace_back(e, col, (w.comp[static_cast<std::size_t>(c)] * b[static_cast<std::size_t>(a)]).integrate(area));
        }
    }
  }
  return from_triplets(coarse.num_edges(), sample.dim(), trip);
}

SparseMatrix sample_divergence(const TriMesh& coarse, const SampleSpace& sample) {
  const TriMesh& fine = sample.fine;
  const auto& ref = p2_reference();
  Triplets trip;
  for (Index t = 0; t < fine.num_triangles(); ++t) {
    const Index T = sample.parent[sz(t)];
    const auto g = fine.geometry(t);
    const Eigen::Matrix3d& E = sample.embed[sz(t)];
    for (int a = 0; a < 6; ++a)
      for (int c = 0; c < 2; ++c) {
        const Index col = sample.velocity().free_of_dof[sz(2 * p2_node(fine, t, a) + c)];
        if (col < 0) continue;
        // int mu_k d_c phi_a over t, for the fine barycentrics mu_k
        Eigen::Vector3d m;
        for (int k = 0; k < 3; ++k) {
          double v = 0.0;
          for (int l = 0; l < 3; ++l)
            v += ref.div_p1[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)](l) * g.grad_lambda[static_cast<std::size_t>(l)](c);
          m(k) = v * g.area;
        }
        for (int q = 0; q < 3; ++q) trip.emplace_back(coarse.triangles[sz(T)][static_cast<std::size_t>(q)], col, E.row(q).dot(m));
      }
  }
  return from_triplets(coarse.num_vertices(), sample.dim(), trip);
}

SparseMatrix p1_to_p2(const TriMesh& mesh) {
  const Index nv = mesh.num_vertices();
  Triplets trip;
  for (Index v = 0; v < nv; ++v)
    for (int c = 0; c < 2; ++c) trip.emplace_back(2 * v + c, 2 * v + c, 1.0);
  for (Index e = 0; e < mesh.num_edges(); ++e)
    for (Index v : mesh.edges[sz(e)])
      for (int c = 0; c < 2; ++c) trip.emplace_back(2 * (nv + e) + c, 2 * v + c, 0.5);
  return from_triplets(2 * (nv + mesh.num_edges()), 2 * nv, trip);
}

// ---------------------------------------------------------------------------

ThBubbleProjector::ThBubbleProjector(const TriMesh& mesh) {
  bubbles_ = build_space(SpaceKind::th_edge_bubble, mesh).basis;
  z0_ = build_space(SpaceKind::nedelec_z0, mesh).basis;
  w2_ = whitney_p2_gram(mesh);
  if (bubbles_.cols() != z0_.cols())
    throw LinalgError("th_bubble_proj: dim V_h^b = " + std::to_string(bubbles_.cols()) + " but dim Z_h^0 = " + std::to_string(z0_.cols()));
  gram_ = SparseMatrix(z0_.transpose() * (w2_ * bubbles_));
  gram_.prune(1e-300, 0.0);
  gram_.makeCompressed();
  auto lu = std::make_shared<Eigen::SparseLU<SparseMatrix>>();
  lu->compute(gram_);
  if (lu->info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "th_bubble_proj: singular Gram matrix";
    for (const auto& m : macroelements(mesh, PartnerPolicy::allow_boundary)) {
      const MatrixXd L = macro_local_matrix(macro_fields(mesh, m), 1.0);
      if (std::abs(L.determinant()) <= 1e-12 * std::pow(L.norm(), 4)) {
        msg << " at macroelement (T = " << m.boundary_tri << ", T- = " << m.partner_tri << ")";
        break;
      }
    }
    throw LinalgError(msg.str());
  }
  auto lu_t = std::make_shared<Eigen::SparseLU<SparseMatrix>>();
  SparseMatrix gt = gram_.transpose();
  lu_t->compute(gt);
  if (lu_t->info() != Eigen::Success) throw LinalgError("th_bubble_proj: singular Gram matrix");
  lu_ = lu;
  lu_t_ = lu_t;
}

VectorXd ThBubbleProjector::coefficients(const VectorXd& whitney_moments) const {
  const VectorXd rhs = z0_.transpose() * whitney_moments;
  return lu_->solve(rhs);
}

VectorXd ThBubbleProjector::transpose_solve(const VectorXd& y) const { return lu_t_->solve(y); }

VectorXd ThBubbleProjector::project_p2(const VectorXd& u) const { return coefficients(w2_ * u); }

double ThBubbleProjector::residual(const VectorXd& whitney_moments, const VectorXd& x) const {
  const VectorXd r = gram_ * x - z0_.transpose() * whitney_moments;
  return r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
}

// ---------------------------------------------------------------------------

FortinOperator::FortinOperator(Element element, const TriMesh& coarse)
    : element_(element), coarse_(coarse), spaces_(build_mixed_spaces(element, coarse)), sample_(build_sample_space(coarse)) {
  r_ = vectorize_columns(clement(coarse_, sample_), sample_.velocity());
  const SparseMatrix sel = free_selection(spaces_.velocity);
  if (element_ == Element::mini) {
    r_out_ = sel * r_;
    const SparseMatrix bub = SparseMatrix(mini_bubble_moments(coarse_, sample_) - p1_bubble_moments(coarse_) * r_);
    Triplets trip;
    for (Index k = 0; k < r_out_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(r_out_, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Index k = 0; k < bub.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(bub, k); it; ++it) trip.emplace_back(r_out_.rows() + it.row(), it.col(), it.value());
    local_ = from_triplets(output_dim(), input_dim(), trip);
  } else {
    const SparseMatrix e1 = p1_to_p2(coarse_);
    const SparseMatrix e1r = e1 * r_;
    r_out_ = sel * e1r;
    local_ = r_out_;
    th_.emplace(coarse_);
    defect_ = SparseMatrix(whitney_sample_gram(coarse_, sample_) - th_->whitney_p2() * e1r);
    bubble_out_ = sel * th_->bubble_basis();
  }
  div_coarse_ = assemble(MatrixKind::div, spaces_, coarse_);
  div_sample_ = sample_divergence(coarse_, sample_);
  mass_in_ = assemble(MatrixKind::mass_v, sample_.spaces, sample_.fine);
  h1_in_ = mass_in_ + assemble(MatrixKind::stiff_v, sample_.spaces, sample_.fine);
  mass_out_ = assemble(MatrixKind::mass_v, spaces_, coarse_);
  h1_out_ = mass_out_ + assemble(MatrixKind::stiff_v, spaces_, coarse_);
}

VectorXd FortinOperator::apply(const VectorXd& v) const {
  if (v.size() != input_dim()) throw std::invalid_argument("FortinOperator::apply: size mismatch");
  VectorXd y = local_ * v;
  if (th_) y += bubble_out_ * th_->coefficients(defect_ * v);
  return y;
}

VectorXd FortinOperator::apply_transpose(const VectorXd& y) const {
  if (y.size() != output_dim()) throw std::invalid_argument("FortinOperator::apply_transpose: size mismatch");
  VectorXd x = local_.transpose() * y;
  if (th_) {
    const VectorXd s = th_->transpose_solve(bubble_out_.transpose() * y);
    x += defect_.transpose() * (th_->z0_basis() * s);
  }
  return x;
}

double commuting_residual(const FortinOperator& pi, const VectorXd& v) {
  const double nrm = std::sqrt(std::max(0.0, v.dot(pi.sample_h1() * v)));
  if (nrm == 0.0) return 0.0;
  const VectorXd r = pi.coarse_divergence() * pi.apply(v) - pi.sample_divergence_matrix() * v;
  return r.cwiseAbs().maxCoeff() / nrm;
}

double operator_norm(Index n, const LinearMap& pi, const LinearMap& pi_t, const SparseMatrix& n_in, const SparseMatrix& n_out,
                     int* iterations) {
  const SpdSolver solver = factorize_spd(n_in);
  LanczosOptions opts;
  opts.squared = false;
  opts.tol = 1e-8;
  opts.max_iter = 4000;
  const auto res = eig_extremes_lanczos(
      n, [&](const VectorXd& x) { return VectorXd(pi_t(n_out * pi(x))); }, [&](const VectorXd& r) { return solver.solve(r); }, {},
      opts);
  if (iterations) *iterations = res.iterations;
  return std::sqrt(std::max(0.0, res.max_eig));
}

OperatorNorms operator_norms(const FortinOperator& pi) {
  OperatorNorms out;
  auto f = [&](const VectorXd& x) { return pi.apply(x); };
  auto ft = [&](const VectorXd& y) { return pi.apply_transpose(y); };
  int it1 = 0, it2 = 0;
  out.l2 = operator_norm(pi.input_dim(), f, ft, pi.sample_mass(), pi.coarse_mass(), &it1);
  out.h1 = operator_norm(pi.input_dim(), f, ft, pi.sample_h1(), pi.coarse_h1(), &it2);
  out.iterations = it1 + it2;
  return out;
}

// ---------------------------------------------------------------------------

double macro_beta(double area_T, double area_Tm) { return 6.0 * area_Tm / (5.0 * area_T + 4.0 * area_Tm); }

MacroFields macro_fields(const TriMesh& mesh, const Macroelement& m, std::optional<double> beta) {
  using P = BaryPoly<double>;
  using F = LocalField<double>;
  MacroFields f;
  const auto& id = m.vertex_ids;
  const Point x0 = mesh.vertices[sz(id[0])], x1 = mesh.vertices[sz(id[1])], x2 = mesh.vertices[sz(id[2])],
              x3 = mesh.vertices[sz(id[3])];
  f.T = TriangleGeometry<double>(x0, x1, x2);
  f.Tm = TriangleGeometry<double>(x1, x2, x3);
  f.beta = beta ? *beta : macro_beta(f.T.area, f.Tm.area);
  const auto lh = f.T.barycentric(m.hat_x0);
  f.hat_l = {lh[1], lh[2]};
  f.alpha = 1.0 - lh[1] - lh[2];
  f.gamma = std::sqrt((2.0 * f.Tm.area + 5.0 * f.T.area * lh[1]) / (2.0 * f.Tm.area + 5.0 * f.T.area * lh[2]));

  const P bT = P::lambda(1) * P::lambda(2) * 6.0;   // 6 l1 l2 on T
  const P bTm = P::lambda(0) * P::lambda(1) * 6.0;  // 6 l1 l2 on T-
  const std::array<Point, 2> w{f.gamma * (x3 - x2), (x3 - x1) / f.gamma};
  for (int i = 0; i < 2; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    f.psi_T[ui] = F::times(bT, w[ui]);
    f.psi_Tm[ui] = F::times(bTm, w[ui]);
    const double s = (i == 0 ? -1.0 : 1.0) * f.beta / 6.0;  // beta (-1)^i l1 l2 (x2 - x1)
    f.psim_T[ui] = F::times(bT * s, x2 - x1);
    f.psim_Tm[ui] = edge_bubble(f.Tm, i, 2) + F::times(bTm * s, x2 - x1);
    f.phi_T[ui] = grad_lambda_field(f.T, i + 1);
    f.phi_Tm[ui] = (i == 0 ? -1.0 : 1.0) * whitney(f.Tm, 0, 1);
    f.phim_Tm[ui] = whitney(f.Tm, i, 2);
  }
  return f;
}

namespace {

double pair_integral(const MacroFields& f, const LocalField<double>& aT, const LocalField<double>& aTm, const LocalField<double>* bT,
                     const LocalField<double>& bTm) {
  double v = dot(aTm, bTm).integrate(f.Tm.area);
  if (bT) v += dot(aT, *bT).integrate(f.T.area);
  return v;
}

LemmaResult finish(MatrixXd M, double area, double bound) {
  LemmaResult r;
  r.asymmetry = (M - M.transpose()).cwiseAbs().maxCoeff();
  r.lambda_min = sym_lambda_min(M);
  r.M = std::move(M);
  r.area = area;
  r.bound = bound;
  return r;
}

}  // namespace

LemmaResult lemma_matrix(LemmaKind kind, const TriMesh& mesh, Index tri) {
  const auto g = mesh.geometry(tri);
  if (kind == LemmaKind::interior_M) {
    std::vector<LocalField<double>> psi, phi;
    for (int k = 0; k < 3; ++k) {
      psi.push_back(edge_bubble_on(mesh, tri, k));
      phi.push_back(whitney_on(mesh, tri, k));
    }
    return finish(local_gram(psi, phi, g), g.area, g.area / 5.0);
  }
  if (kind == LemmaKind::boundary1) {
    if (mesh.tri_kind[sz(tri)] != TriKind::one_boundary_edge)
      throw std::invalid_argument("lemma_matrix: boundary1 needs a triangle with exactly one boundary edge");
    const auto c = whitney_curls(mesh, tri);
    int kb = -1;
    std::vector<int> ki;
    for (int k = 0; k < 3; ++k) {
      if (mesh.edge_kind[sz(mesh.tri_edges[sz(tri)][static_cast<std::size_t>(k)])] == EdgeKind::boundary)
        kb = k;
      else
        ki.push_back(k);
    }
    std::vector<LocalField<double>> psi, phi;
    for (int k : ki) {
      psi.push_back(edge_bubble_on(mesh, tri, k));
      // curl-free completion on the boundary edge
      phi.push_back(whitney_on(mesh, tri, k) - (c[static_cast<std::size_t>(k)] / c[static_cast<std::size_t>(kb)]) * whitney_on(mesh, tri, kb));
    }
    return finish(local_gram(psi, phi, g), g.area, g.area / 2.0);
  }
  throw std::invalid_argument("lemma_matrix: Mminus and macro_M take a macroelement");
}

LemmaResult lemma_matrix(LemmaKind kind, const TriMesh& mesh, const Macroelement& m) {
  const MacroFields f = macro_fields(mesh, m);
  MatrixXd M(2, 2);
  if (kind == LemmaKind::Mminus) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        M(i, j) = dot(f.psim_Tm[static_cast<std::size_t>(i)], f.phim_Tm[static_cast<std::size_t>(j)]).integrate(f.Tm.area);
    return finish(M, f.Tm.area, f.Tm.area / 4.0);
  }
  if (kind == LemmaKind::macro_M) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
        M(i, j) = pair_integral(f, f.psi_T[ui], f.psi_Tm[ui], &f.phi_T[uj], f.phi_Tm[uj]);
      }
    return finish(M, f.T.area, f.alpha * std::min(f.gamma, 1.0 / f.gamma) * f.T.area / 2.0);
  }
  throw std::invalid_argument("lemma_matrix: interior_M and boundary1 take a triangle");
}

double orth_check(const TriMesh& mesh, const Macroelement& m, std::optional<double> beta) {
  const MacroFields f = macro_fields(mesh, m, beta);
  double worst = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      worst = std::max(worst, std::abs(pair_integral(f, f.psim_T[ui], f.psim_Tm[ui], &f.phi_T[uj], f.phi_Tm[uj])));
    }
  return worst;
}

MatrixXd macro_local_matrix(const MacroFields& f, double C) {
  // basis (psi_1, psi_2, psi_1^-, psi_2^-)
  std::array<const LocalField<double>*, 4> aT{&f.psi_T[0], &f.psi_T[1], &f.psim_T[0], &f.psim_T[1]};
  std::array<const LocalField<double>*, 4> aTm{&f.psi_Tm[0], &f.psi_Tm[1], &f.psim_Tm[0], &f.psim_Tm[1]};
  MatrixXd L(4, 4);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const auto ua = static_cast<std::size_t>(a);
      if (b < 2) {
        const auto ub = static_cast<std::size_t>(b);
        L(a, b) = C * pair_integral(f, *aT[ua], *aTm[ua], &f.phi_T[ub], f.phi_Tm[ub]);
      } else {
        L(a, b) = pair_integral(f, *aT[ua], *aTm[ua], nullptr, f.phim_Tm[static_cast<std::size_t>(b - 2)]);
      }
    }
  return L;
}

MacroScaling macro_scaling(const MacroFields& f) {
  MacroScaling s;
  for (int k = 0; k < 40; ++k) {
    s.C = std::ldexp(1.0, k);
    const MatrixXd L = macro_local_matrix(f, s.C);
    const double lm = sym_lambda_min(L);
    if (lm > 1e-12 * L.norm()) {
      s.lower_bound = lm / (f.T.area + f.Tm.area);
      return s;
    }
  }
  throw LinalgError("macro_scaling: no admissible scaling");
}

PhiMap phi_map(const TriMesh& mesh) {
  PhiMap out;
  out.macros = macroelements(mesh, PartnerPolicy::require_interior);
  const EdgePartition part = classify(mesh);
  const SparseMatrix Z0 = build_space(SpaceKind::nedelec_z0, mesh).basis;
  const Index nv = mesh.num_vertices(), ne = mesh.num_edges();
  const Index n_p2 = 2 * (nv + ne);

  // Z0 columns are ordered as part.interior.
  std::vector<Index> z0_col(sz(ne), -1);
  for (std::size_t i = 0; i < part.interior.size(); ++i) z0_col[sz(part.interior[i])] = static_cast<Index>(i);

  using Col = std::map<Index, double>;
  std::vector<Col> bub, img;
  std::vector<Index> col_of_edge(sz(ne), -1);
  auto tangent = [&](Index e) {
    const auto& ev = mesh.edges[sz(e)];
    return Point(mesh.vertices[sz(ev[1])] - mesh.vertices[sz(ev[0])]);
  };
  for (Index e : part.interior_single) {
    col_of_edge[sz(e)] = static_cast<Index>(bub.size());
    const Point t = tangent(e);
    bub.push_back({{2 * (nv + e), 1.5 * t(0)}, {2 * (nv + e) + 1, 1.5 * t(1)}});
    Col z;
    const Index zc = z0_col[sz(e)];
    for (SparseMatrix::InnerIterator it(Z0, zc); it; ++it) z[it.row()] = it.value();
    img.push_back(std::move(z));
    out.edge.push_back(e);
  }
  auto find_edge = [&](Index a, Index b) {
    const Index lo = std::min(a, b), hi = std::max(a, b);
    for (Index e = 0; e < ne; ++e)
      if (mesh.edges[sz(e)][0] == lo && mesh.edges[sz(e)][1] == hi) return e;
    throw MeshError("phi_map: missing edge");
  };
  for (const auto& m : out.macros) {
    const MacroFields f = macro_fields(mesh, m);
    const MacroScaling sc = macro_scaling(f);
    out.scaling.push_back(sc);
    out.beta.push_back(f.beta);
    out.gamma.push_back(f.gamma);
    const auto& id = m.vertex_ids;
    const Point x1 = mesh.vertices[sz(id[1])], x2 = mesh.vertices[sz(id[2])], x3 = mesh.vertices[sz(id[3])];
    const Index eT = m.shared_edge;
    // psi_i^-: edge (x_i, x3) oriented x_i -> x3 plus the beta multiple of the e_T bubble
    for (int i = 1; i <= 2; ++i) {
      const Index xi = id[static_cast<std::size_t>(i)];
      Index e = -1;
      for (Index te : mesh.tri_edges[sz(m.partner_tri)]) {
        const auto& ev = mesh.edges[sz(te)];
        if ((ev[0] == xi && ev[1] == id[3]) || (ev[1] == xi && ev[0] == id[3])) e = te;
      }
      if (e < 0) e = find_edge(xi, id[3]);
      const Index c = col_of_edge[sz(e)];
      const double s = xi < id[3] ? 1.0 : -1.0;
      for (auto& [r, v] : bub[sz(c)]) v *= s;
      for (auto& [r, v] : img[sz(c)]) v *= s;
      const double b = (i == 1 ? -1.0 : 1.0) * 0.25 * f.beta;
      bub[sz(c)][2 * (nv + eT)] += b * (x2 - x1)(0);
      bub[sz(c)][2 * (nv + eT) + 1] += b * (x2 - x1)(1);
    }
    // psi_1, psi_2 on e_T and their images C grad l_i on T, (-1)^i phi_T on T-
    const std::array<Point, 2> w{f.gamma * (x3 - x2), (x3 - x1) / f.gamma};
    for (int i = 1; i <= 2; ++i) {
      const Point& wi = w[static_cast<std::size_t>(i - 1)];
      bub.push_back({{2 * (nv + eT), 1.5 * wi(0)}, {2 * (nv + eT) + 1, 1.5 * wi(1)}});
      const int li = mesh.local_vertex_index(m.boundary_tri, id[static_cast<std::size_t>(i)]);
      auto lambda_at = [&](Index v) {
        const int k = mesh.local_vertex_index(m.boundary_tri, v);
        return k == li ? 1.0 : 0.0;
      };
      Col z;
      for (Index e : mesh.tri_edges[sz(m.boundary_tri)]) {
        const auto& ev = mesh.edges[sz(e)];
        const double val = sc.C * (lambda_at(ev[1]) - lambda_at(ev[0]));
        if (val != 0.0) z[e] = val;
      }
      img.push_back(std::move(z));
      out.edge.push_back(eT);
    }
  }
  Triplets tb, ti;
  for (std::size_t c = 0; c < bub.size(); ++c) {
    for (const auto& [r, v] : bub[c]) tb.emplace_back(r, static_cast<Index>(c), v);
    for (const auto& [r, v] : img[c]) ti.emplace_back(r, static_cast<Index>(c), v);
  }
  out.bubbles = from_triplets(n_p2, static_cast<Index>(bub.size()), tb);
  out.images = from_triplets(ne, static_cast<Index>(img.size()), ti);
  return out;
}

BubbleInfSup bubble_infsup(const TriMesh& mesh) {
  BubbleInfSup out;
  const ThBubbleProjector proj(mesh);
  const MixedSpaces th = build_mixed_spaces(Element::taylor_hood, mesh);
  AssemblyOptions full;
  full.eliminate_dirichlet = false;
  const SparseMatrix M2 = assemble(MatrixKind::mass_v, th, mesh, full);
  const SparseMatrix Wm = whitney_mass(mesh);
  const MatrixXd Vb = MatrixXd(proj.bubble_basis());
  const MatrixXd Z0 = MatrixXd(proj.z0_basis());
  const MatrixXd Mv = Vb.transpose() * (M2 * Vb);
  const MatrixXd Mz = Z0.transpose() * (Wm * Z0);
  const MatrixXd G = MatrixXd(proj.gram());

  const Eigen::LLT<MatrixXd> Lv(Mv), Lz(Mz);
  if (Lv.info() != Eigen::Success || Lz.info() != Eigen::Success) throw LinalgError("bubble_infsup: singular Gram matrices");
  // S = Lz^-1 G Lv^-T
  MatrixXd S = Lz.matrixL().solve(G);
  S = Lv.matrixL().solve(S.transpose()).transpose();
  out.c0 = Eigen::JacobiSVD<MatrixXd>(S).singularValues().minCoeff();
  out.sigma_min_gram = Eigen::JacobiSVD<MatrixXd>(G).singularValues().minCoeff();
  const MatrixXd GtMzG = G.transpose() * Lz.solve(G);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ge(0.5 * (GtMzG + GtMzG.transpose()), Mv, Eigen::EigenvaluesOnly);
  out.c0_eig = std::sqrt(std::max(0.0, ge.eigenvalues()(0)));

  const PhiMap phi = phi_map(mesh);
  const MatrixXd B = MatrixXd(phi.bubbles), I = MatrixXd(phi.images);
  const MatrixXd P = B.transpose() * (MatrixXd(proj.whitney_p2().transpose()) * I);
  const MatrixXd Ps = 0.5 * (P + P.transpose());
  const MatrixXd Mb = B.transpose() * (M2 * B);
  const MatrixXd N = I.transpose() * (Wm * I);
  // <v, Phi v> >= lam * (t ||v||^2 + ||Phi v||^2 / t) / 2 >= lam ||v|| ||Phi v|| for lam >= 0
  auto bound = [&](double log_t) {
    const double t = std::exp(log_t);
    const MatrixXd D = 0.5 * (t * Mb + N / t);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(Ps, D, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  };
  const double t0 = 0.5 * std::log(N.trace() / Mb.trace());
  double lo = t0 - 4.0, hi = t0 + 4.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
  double fa = bound(a), fb = bound(b);
  for (int it = 0; it < 24; ++it) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - gr * (hi - lo);
      fa = bound(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + gr * (hi - lo);
      fb = bound(b);
    }
  }
  out.phi_bound = std::max(fa, fb);
  return out;
}

NormEquivalence norm_equivalence(const TriMesh& mesh, const PhiMap& phi) {
  const MixedSpaces th = build_mixed_spaces(Element::taylor_hood, mesh);
  AssemblyOptions full;
  full.eliminate_dirichlet = false;
  const SparseMatrix M2 = assemble(MatrixKind::mass_v, th, mesh, full);
  const SparseMatrix Wm = whitney_mass(mesh);
  const MatrixXd B = MatrixXd(phi.bubbles), I = MatrixXd(phi.images);
  const MatrixXd Mb = B.transpose() * (M2 * B);
  const MatrixXd N = I.transpose() * (Wm * I);
  const Index n = B.cols();
  VectorXd dv(n), dz(n);
  for (Index c = 0; c < n; ++c) {
    double wv = 0.0, wz = 0.0;
    for (Index t : mesh.edge_tris[sz(phi.edge[sz(c)])]) {
      if (t < 0) continue;
      wv += mesh.tri_area[sz(t)] * mesh.tri_area[sz(t)];
      wz += 1.0;
    }
    dv(c) = wv;
    dz(c) = wz;
  }
  NormEquivalence r;
  auto extremes = [](const MatrixXd& A, const VectorXd& d, double& lo, double& hi) {
    const VectorXd s = d.cwiseSqrt().cwiseInverse();
    const MatrixXd S = s.asDiagonal() * A * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    lo = es.eigenvalues()(0);
    hi = es.eigenvalues()(S.rows() - 1);
  };
  extremes(Mb, dv, r.v_min, r.v_max);
  extremes(N, dz, r.z_min, r.z_max);
  return r;
}

std::vector<LemmaCheck> lemma_suite(const TriMesh& mesh, double tol) {
  LemmaCheck interior{"interior_M"}, boundary{"boundary_identity"}, mminus{"Mminus_entries"},
      mminus_pos{"Mminus_lambda_min"}, orth{"orthogonality"}, macro_sym{"macro_M_symmetry"},
      macro_pos{"macro_M_lambda_min"};
  mminus_pos.inequality = macro_pos.inequality = true;
  mminus_pos.min_margin = macro_pos.min_margin = std::numeric_limits<double>::infinity();
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const TriKind k = mesh.tri_kind[sz(t)];
    if (k == TriKind::interior) {
      const auto r = lemma_matrix(LemmaKind::interior_M, mesh, t);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double ex = (i == j ? 0.4 : 0.1) * r.area;
          interior.max_error = std::max(interior.max_error, std::abs(std::abs(r.M(i, j)) - ex) / r.area);
        }
      ++interior.count;
    } else if (k == TriKind::one_boundary_edge) {
      const auto r = lemma_matrix(LemmaKind::boundary1, mesh, t);
      const MatrixXd ex = 0.5 * r.area * MatrixXd::Identity(r.M.rows(), r.M.cols());
      boundary.max_error = std::max(boundary.max_error, (r.M - ex).cwiseAbs().maxCoeff() / r.area);
      ++boundary.count;
    }
  }
  for (const auto& m : macroelements(mesh, PartnerPolicy::allow_boundary)) {
    const MacroFields f = macro_fields(mesh, m);
    const auto r = lemma_matrix(LemmaKind::Mminus, mesh, m);
    const double b = f.beta;
    MatrixXd ex(2, 2);
    ex << 24 - b, 6 + b, 6 + b, 24 - b;
    ex *= r.area / 60.0;
    mminus.max_error = std::max(mminus.max_error, (r.M - ex).cwiseAbs().maxCoeff() / r.area);
    mminus_pos.min_margin = std::min(mminus_pos.min_margin, (r.lambda_min - r.bound) / r.bound);
    orth.max_error = std::max(orth.max_error, orth_check(mesh, m) / f.T.area);
    const auto q = lemma_matrix(LemmaKind::macro_M, mesh, m);
    macro_sym.max_error = std::max(macro_sym.max_error, q.asymmetry / q.area);
    macro_pos.min_margin = std::min(macro_pos.min_margin, (q.lambda_min - q.bound) / q.bound);
    ++mminus.count;
    ++mminus_pos.count;
    ++orth.count;
    ++macro_sym.count;
    ++macro_pos.count;
  }
  std::vector<LemmaCheck> out{interior, boundary, mminus, mminus_pos, orth, macro_sym, macro_pos};
  for (auto& c : out) {
    if (c.inequality) {
      if (c.count == 0) c.min_margin = 0.0;
      // strict for M-, non-strict with relative slack for the macro bound
      c.passed = c.name == "Mminus_lambda_min" ? (c.count == 0 || c.min_margin > 0.0) : c.min_margin >= -tol;
    } else {
      c.passed = c.max_error <= tol;
    }
  }
  return out;
}

DimensionIdentity dimension_identity(const TriMesh& mesh) {
  DimensionIdentity d;
  d.bubble_dim = build_space(SpaceKind::th_edge_bubble, mesh, PartnerPolicy::allow_boundary).basis.cols();
  d.z0_dim = build_space(SpaceKind::nedelec_z0, mesh, PartnerPolicy::allow_boundary).basis.cols();
  d.two_boundary_tris = static_cast<Index>(classify(mesh).tris_two_boundary.size());
  return d;
}

FortinReport fortin_report(Element element, const TriMesh& mesh, int samples, unsigned seed, bool with_norms) {
  const FortinOperator pi(element, mesh);
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  auto draw = [&](Index n) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
  };
  FortinReport r;
  for (int k = 0; k < samples; ++k) r.commuting = std::max(r.commuting, commuting_residual(pi, draw(pi.input_dim())));
  const VectorXd x = draw(pi.input_dim()), y = draw(pi.output_dim());
  const double scale = y.norm() * pi.apply(x).norm() + x.norm() * pi.apply_transpose(y).norm();
  r.transpose_defect = std::abs(y.dot(pi.apply(x)) - x.dot(pi.apply_transpose(y))) / scale;
  if (with_norms) r.norms = operator_norms(pi);
  if (element == Element::taylor_hood) r.dims = dimension_identity(mesh);
  return r;
}

}  // namespace stokes
