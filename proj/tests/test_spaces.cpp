#include <gtest/gtest.h>

#include <Eigen/QR>

#include <random>

#include "stokes/spaces.hpp"

using namespace stokes;

namespace {

const Domain kDomains[] = {Domain::square, Domain::lshape, Domain::slit};

// Exact curl of the Whitney expansion with coefficients a on triangle t.
double curl_on(const TriMesh& m, Index t, const VectorXd& a) {
  const auto c = whitney_curls(m, t);
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += a(m.tri_edges[static_cast<std::size_t>(t)][k]) * c[static_cast<std::size_t>(k)];
  return s;
}

Index rank_of(const SparseMatrix& A) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr{MatrixXd(A)};
  qr.setThreshold(1e-12);
  return qr.rank();
}

}  // namespace

TEST(BuildSpace, P2SquareLevelOne) {
  const TriMesh m = build_mesh(Domain::square, 1);
  const FeSpace s = build_space(SpaceKind::p2_vec, m);
  EXPECT_EQ(s.n_dofs, 50);
  EXPECT_EQ(s.dim(), 18);
}

TEST(BuildSpace, NedelecSquareLevelOne) {
  const FeSpace s = build_space(SpaceKind::nedelec, build_mesh(Domain::square, 1));
  EXPECT_EQ(s.n_dofs, 16);
}

TEST(BuildSpace, DofCounts) {
  for (Domain d : kDomains)
    for (int level = 1; level <= 3; ++level) {
      const TriMesh m = build_mesh(d, level);
      const EdgePartition p = classify(m);
      Index nbv = 0;
      for (bool b : m.boundary_vertex) nbv += b;
      const FeSpace p1 = build_space(SpaceKind::p1_scalar, m);
      EXPECT_EQ(p1.dim(), m.num_vertices());
      const FeSpace v1 = build_space(SpaceKind::p1_vec, m);
      EXPECT_EQ(v1.dim(), 2 * (m.num_vertices() - nbv));
      const FeSpace p2 = build_space(SpaceKind::p2_vec, m);
      EXPECT_EQ(p2.n_dofs, 2 * (m.num_vertices() + m.num_edges()));
      EXPECT_EQ(p2.dim(), 2 * (m.num_vertices() - nbv + static_cast<Index>(p.interior.size())));
      const FeSpace b = build_space(SpaceKind::mini_bubble_vec, m);
      EXPECT_EQ(b.dim(), 2 * m.num_triangles());
      const FeSpace vb = build_space(SpaceKind::th_edge_bubble, m);
      EXPECT_EQ(vb.basis.cols(), static_cast<Index>(p.interior.size() + p.interior_macro.size()));
      const FeSpace z0 = build_space(SpaceKind::nedelec_z0, m, PartnerPolicy::allow_boundary);
      const Index nbt = static_cast<Index>(p.tris_one_boundary.size() + p.tris_two_boundary.size());
      EXPECT_EQ(z0.basis.cols(), m.num_edges() - nbt);
    }
}

TEST(BuildSpace, DimensionIdentity) {
  for (Domain d : kDomains)
    for (int level = 1; level <= 3; ++level) {
      const TriMesh m = build_mesh(d, level);
      const PartnerPolicy pol = level == 1 && d != Domain::square ? PartnerPolicy::allow_boundary : PartnerPolicy::require_interior;
      const FeSpace vb = build_space(SpaceKind::th_edge_bubble, m);
      const FeSpace z0 = build_space(SpaceKind::nedelec_z0, m, pol);
      EXPECT_EQ(vb.basis.cols(), z0.basis.cols()) << to_string(d) << " " << level;
      EXPECT_EQ(rank_of(vb.basis), vb.basis.cols());
      EXPECT_EQ(rank_of(z0.basis), z0.basis.cols());
    }
}

TEST(BuildSpace, Z0RejectsInadmissibleMesh) {
  EXPECT_THROW(build_space(SpaceKind::nedelec_z0, build_mesh(Domain::lshape, 1)), MeshError);
}

TEST(BuildSpace, SlitDirichletOnBothSides) {
  const TriMesh m = build_mesh(Domain::slit, 2);
  const FeSpace v = build_space(SpaceKind::p1_vec, m);
  for (Index i = 0; i < m.num_vertices(); ++i) {
    const Point& p = m.vertices[static_cast<std::size_t>(i)];
    if (std::abs(p(1) - 0.5) < 1e-15 && p(0) >= 0.5 - 1e-15) EXPECT_TRUE(v.dirichlet[static_cast<std::size_t>(2 * i)]);
  }
}

TEST(Z0, BasisIsCurlFreeOnBoundaryTriangles) {
  for (Domain d : kDomains)
    for (int level = 2; level <= 3; ++level) {
      const TriMesh m = build_mesh(d, level);
      const FeSpace z0 = build_space(SpaceKind::nedelec_z0, m);
      const MatrixXd Z(z0.basis);
      for (Index j = 0; j < Z.cols(); ++j)
        for (Index t = 0; t < m.num_triangles(); ++t)
          if (m.tri_kind[static_cast<std::size_t>(t)] != TriKind::interior) EXPECT_NEAR(curl_on(m, t, Z.col(j)), 0.0, 1e-12);
    }
}

TEST(Z0, BoundaryCoefficients) {
  const TriMesh m = build_mesh(Domain::square, 1);
  const VectorXd zero = z0_boundary_coeffs(m, VectorXd::Zero(m.num_edges()));
  EXPECT_EQ(zero.cwiseAbs().maxCoeff(), 0.0);
  std::mt19937 rng(3);
  std::normal_distribution<double> N;
  VectorXd a(m.num_edges());
  for (Index e = 0; e < a.size(); ++e) a(e) = N(rng);
  const VectorXd z = z0_boundary_coeffs(m, a);
  for (Index t = 0; t < m.num_triangles(); ++t) {
    if (m.tri_kind[static_cast<std::size_t>(t)] != TriKind::interior) {
      const double scale = 1.0 / m.tri_area[static_cast<std::size_t>(t)];
      EXPECT_LT(std::abs(curl_on(m, t, z)) / scale, 1e-13);
    }
  }
  for (Index e = 0; e < m.num_edges(); ++e)
    if (m.edge_kind[static_cast<std::size_t>(e)] == EdgeKind::interior) EXPECT_EQ(z(e), a(e));
}

TEST(Z0, GradientsLieInZ0) {
  for (Domain d : kDomains) {
    const TriMesh m = build_mesh(d, 2);
    const FeSpace z0 = build_space(SpaceKind::nedelec_z0, m);
    const MatrixXd Z(z0.basis);
    std::mt19937 rng(11);
    std::normal_distribution<double> N;
    VectorXd q(m.num_vertices());
    for (Index i = 0; i < q.size(); ++i) q(i) = N(rng);
    const VectorXd g = gradient_whitney_coeffs(m, q);
    const VectorXd c = Z.colPivHouseholderQr().solve(g);
    EXPECT_LT((Z * c - g).norm(), 1e-12 * g.norm());
  }
}

TEST(Z0, GradientCoefficientsAreEdgeDifferences) {
  const TriMesh m = build_mesh(Domain::lshape, 2);
  VectorXd q(m.num_vertices());
  for (Index i = 0; i < q.size(); ++i) q(i) = m.vertices[static_cast<std::size_t>(i)](0) * 3.0 - m.vertices[static_cast<std::size_t>(i)](1);
  const VectorXd a = gradient_whitney_coeffs(m, q);
  // grad q is constant (3, -1); its Whitney coefficient is the tangential moment along (lo -> hi)
  for (Index e = 0; e < m.num_edges(); ++e) {
    const auto& ev = m.edges[static_cast<std::size_t>(e)];
    const Point t = m.vertices[static_cast<std::size_t>(ev[1])] - m.vertices[static_cast<std::size_t>(ev[0])];
    EXPECT_NEAR(a(e), 3.0 * t(0) - t(1), 1e-15);
  }
}

TEST(MeanZero, Projector) {
  const TriMesh m = build_mesh(Domain::square, 3);
  const FeSpace Q = build_space(SpaceKind::p1_scalar, m);
  const MeanZeroProjector P = mean_zero_projector(Q, m);
  EXPECT_NEAR(P.measure, 1.0, 1e-14);
  const VectorXd one = VectorXd::Ones(Q.dim());
  EXPECT_LT(P.project(one).cwiseAbs().maxCoeff(), 1e-14);
  VectorXd x(Q.dim());
  for (Index i = 0; i < x.size(); ++i) x(i) = m.vertices[static_cast<std::size_t>(i)](0);
  EXPECT_NEAR(P.mean(x), 0.5, 1e-14);  // exact integral of x
  const VectorXd px = P.project(x);
  EXPECT_LT(std::abs(P.m.dot(px)), 1e-14 * px.norm());
  EXPECT_LT((P.project(px) - px).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MeanZero, RejectsNonScalarSpace) {
  const TriMesh m = build_mesh(Domain::square, 1);
  EXPECT_THROW(mean_zero_projector(build_space(SpaceKind::p1_vec, m), m), std::invalid_argument);
}

TEST(BuildSpace, DeterministicNumbering) {
  const TriMesh m = build_mesh(Domain::slit, 3);
  const FeSpace a = build_space(SpaceKind::p2_vec, m), b = build_space(SpaceKind::p2_vec, m);
  EXPECT_EQ(a.dof_of_free, b.dof_of_free);
}
