#include <gtest/gtest.h>

#include <random>

#include "stokes/fortin.hpp"

using namespace stokes;

namespace {

const Domain kDomains[] = {Domain::square, Domain::lshape, Domain::slit};

// Coordinates of a P2 node (vertex, then edge midpoint).
Point p2_node(const TriMesh& m, Index n) {
  const Index nv = m.num_vertices();
  if (n < nv) return m.vertices[static_cast<std::size_t>(n)];
  const auto& e = m.edges[static_cast<std::size_t>(n - nv)];
  return 0.5 * (m.vertices[static_cast<std::size_t>(e[0])] + m.vertices[static_cast<std::size_t>(e[1])]);
}

VectorXd random_vector(Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> N;
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

}  // namespace

TEST(SampleSpace, OnceRefined) {
  const TriMesh c = build_mesh(Domain::lshape, 2);
  const SampleSpace s = build_sample_space(c);
  EXPECT_EQ(s.fine.num_triangles(), 4 * c.num_triangles());
  std::vector<int> kids(static_cast<std::size_t>(c.num_triangles()), 0);
  for (Index p : s.parent) ++kids[static_cast<std::size_t>(p)];
  for (int k : kids) EXPECT_EQ(k, 4);
}

TEST(Clement, ReproducesLinearsInside) {
  for (Domain d : kDomains) {
    const TriMesh c = build_mesh(d, 2);
    const SampleSpace s = build_sample_space(c);
    const SparseMatrix R = clement(c, s);
    const Index nodes = s.fine.num_vertices() + s.fine.num_edges();
    ASSERT_EQ(R.cols(), nodes);
    VectorXd one = VectorXd::Ones(nodes), lin(nodes);
    for (Index n = 0; n < nodes; ++n) {
      const Point x = p2_node(s.fine, n);
      lin(n) = 2.0 * x(0) - x(1) + 0.3;
    }
    const VectorXd r1 = R * one, rl = R * lin;
    for (Index v = 0; v < c.num_vertices(); ++v) {
      const Point& x = c.vertices[static_cast<std::size_t>(v)];
      if (c.boundary_vertex[static_cast<std::size_t>(v)]) {
        EXPECT_EQ(r1(v), 0.0);
        EXPECT_EQ(rl(v), 0.0);
      } else {
        EXPECT_NEAR(r1(v), 1.0, 1e-12);
        EXPECT_NEAR(rl(v), 2.0 * x(0) - x(1) + 0.3, 1e-12);
      }
    }
  }
}

TEST(Clement, IsLocalToThePatch) {
  const TriMesh c = build_mesh(Domain::square, 2);
  const SampleSpace s = build_sample_space(c);
  const SparseMatrix R = clement(c, s);
  const Index nv = s.fine.num_vertices();
  // coarse triangles touching each fine P2 node
  std::vector<std::vector<Index>> touching(static_cast<std::size_t>(nv + s.fine.num_edges()));
  for (Index t = 0; t < s.fine.num_triangles(); ++t) {
    const Index parent = s.parent[static_cast<std::size_t>(t)];
    for (Index v : s.fine.triangles[static_cast<std::size_t>(t)]) touching[static_cast<std::size_t>(v)].push_back(parent);
    for (Index e : s.fine.tri_edges[static_cast<std::size_t>(t)]) touching[static_cast<std::size_t>(nv + e)].push_back(parent);
  }
  for (Index k = 0; k < R.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(R, k); it; ++it) {
      if (it.value() == 0.0) continue;
      bool in_patch = false;
      for (Index t : touching[static_cast<std::size_t>(it.col())])
        in_patch = in_patch || c.local_vertex_index(t, it.row()) >= 0;
      EXPECT_TRUE(in_patch) << it.row() << " " << it.col();
    }
}

TEST(MiniMoments, ConstantField) {
  const TriMesh c = build_mesh(Domain::slit, 2);
  const SparseMatrix P = p1_bubble_moments(c);
  VectorXd u = VectorXd::Zero(2 * c.num_vertices());
  for (Index v = 0; v < c.num_vertices(); ++v) u(2 * v) = 1.0;
  const VectorXd r = P * u;
  for (Index t = 0; t < c.num_triangles(); ++t) {
    EXPECT_NEAR(r(2 * t), c.tri_area[static_cast<std::size_t>(t)], 1e-15);
    EXPECT_NEAR(r(2 * t + 1), 0.0, 1e-15);
  }
}

TEST(MiniMoments, SampleFieldsAgainstNodalRule) {
  const TriMesh c = build_mesh(Domain::lshape, 2);
  const SampleSpace s = build_sample_space(c);
  const SparseMatrix P = mini_bubble_moments(c, s);
  const VectorXd x = random_vector(s.dim(), 4);
  VectorXd full = VectorXd::Zero(s.velocity().n_dofs);
  for (Index i = 0; i < s.dim(); ++i) full(s.velocity().dof_of_free[static_cast<std::size_t>(i)]) = x(i);
  // P2 rule: int over t of a quadratic = |t|/3 times the sum of its midpoint values
  VectorXd expect = VectorXd::Zero(2 * c.num_triangles());
  const Index nv = s.fine.num_vertices();
  for (Index t = 0; t < s.fine.num_triangles(); ++t) {
    const Index p = s.parent[static_cast<std::size_t>(t)];
    for (Index e : s.fine.tri_edges[static_cast<std::size_t>(t)])
      for (int comp = 0; comp < 2; ++comp) expect(2 * p + comp) += s.fine.tri_area[static_cast<std::size_t>(t)] / 3.0 * full(2 * (nv + e) + comp);
  }
  EXPECT_LT((P * x - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(FortinOperator, CommutesWithDivergence) {
  for (Element el : {Element::taylor_hood, Element::mini})
    for (Domain d : kDomains) {
      const FortinOperator pi(el, build_mesh(d, 2));
      EXPECT_EQ(commuting_residual(pi, VectorXd::Zero(pi.input_dim())), 0.0);
      for (unsigned seed = 1; seed <= 3; ++seed)
        EXPECT_LT(commuting_residual(pi, random_vector(pi.input_dim(), seed)), 1e-11) << to_string(el) << " " << to_string(d);
    }
}

TEST(FortinOperator, TransposeIsAdjoint) {
  for (Element el : {Element::taylor_hood, Element::mini}) {
    const FortinOperator pi(el, build_mesh(Domain::slit, 2));
    const VectorXd v = random_vector(pi.input_dim(), 7), y = random_vector(pi.output_dim(), 8);
    const double lhs = pi.apply(v).dot(y), rhs = v.dot(pi.apply_transpose(y));
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(ThBubble, ProjectsOntoItself) {
  const TriMesh m = build_mesh(Domain::square, 3);
  const ThBubbleProjector P(m);
  EXPECT_EQ(P.gram().rows(), P.gram().cols());
  EXPECT_EQ(P.gram().rows(), P.dim());
  const MatrixXd Bb(P.bubble_basis());
  for (Index j = 0; j < P.dim(); j += 7) {
    const VectorXd x = P.project_p2(Bb.col(j));
    EXPECT_LT((x - VectorXd::Unit(P.dim(), j)).cwiseAbs().maxCoeff(), 1e-11);
  }
}

TEST(ThBubble, MatchesMomentsAgainstZ0) {
  for (Domain d : kDomains) {
    const TriMesh m = build_mesh(d, 3);
    const ThBubbleProjector P(m);
    const VectorXd u = random_vector(P.whitney_p2().cols(), 12);
    const VectorXd x = P.project_p2(u);
    const VectorXd r = P.whitney_p2() * u;
    EXPECT_LT(P.residual(r, x), 1e-11 * r.cwiseAbs().maxCoeff());
    const VectorXd defect = P.z0_basis().transpose() * (P.whitney_p2() * (P.bubble_basis() * x - u));
    EXPECT_LT(defect.cwiseAbs().maxCoeff(), 1e-11 * r.cwiseAbs().maxCoeff());
  }
}

TEST(Lemmas, InteriorAndBoundaryBounds) {
  for (Domain d : kDomains) {
    const TriMesh m = build_mesh(d, 3);
    for (Index t = 0; t < m.num_triangles(); ++t) {
      const TriKind k = m.tri_kind[static_cast<std::size_t>(t)];
      if (k == TriKind::two_boundary_edges) continue;
      const LemmaResult r = lemma_matrix(k == TriKind::interior ? LemmaKind::interior_M : LemmaKind::boundary1, m, t);
      EXPECT_GE(r.lambda_min, r.bound * (1.0 - 1e-13));
    }
    EXPECT_THROW(lemma_matrix(LemmaKind::Mminus, m, Index{0}), std::invalid_argument);
  }
}

TEST(Lemmas, MminusEigenvalueOnUniformMesh) {
  const double beta = macro_beta(1.0, 1.0);
  EXPECT_NEAR(beta, 2.0 / 3.0, 1e-15);
  for (Domain d : kDomains) {
    const TriMesh m = build_mesh(d, 3);
    for (const Macroelement& mc : macroelements(m)) {
      const LemmaResult r = lemma_matrix(LemmaKind::Mminus, m, mc);
      EXPECT_NEAR(r.lambda_min, (9.0 - beta) * r.area / 30.0, 1e-13 * r.area);
      EXPECT_GT(r.lambda_min, r.bound);
    }
  }
}

TEST(Lemmas, OrthogonalityNeedsTheRightBeta) {
  const TriMesh m = build_mesh(Domain::square, 3);
  for (const Macroelement& mc : macroelements(m)) {
    const double area = m.tri_area[static_cast<std::size_t>(mc.boundary_tri)];
    EXPECT_LT(orth_check(m, mc), 1e-14 * area);
    EXPECT_GT(orth_check(m, mc, 2.0 / 3.0 + 0.1), 1e-3 * area);
  }
}

TEST(Lemmas, MacroScalingIsPositive) {
  for (Domain d : kDomains) {
    const TriMesh m = build_mesh(d, 2);
    for (const Macroelement& mc : macroelements(m)) {
      const MacroFields f = macro_fields(m, mc);
      EXPECT_GT(f.gamma, 0.0);
      const MacroScaling s = macro_scaling(f);
      EXPECT_GE(s.C, 1.0);
      EXPECT_GT(s.lower_bound, 0.0);
    }
  }
}

TEST(Lemmas, SuitePassesOnAllMeshes) {
  for (Domain d : kDomains)
    for (int level = 1; level <= 3; ++level)
      for (const LemmaCheck& c : lemma_suite(build_mesh(d, level)))
        EXPECT_TRUE(c.passed) << to_string(d) << " " << level << " " << c.name << " err " << c.max_error << " margin " << c.min_margin;
}

TEST(Dimension, IdentityHolds) {
  for (Domain d : kDomains)
    for (int level = 1; level <= 4; ++level) {
      const DimensionIdentity di = dimension_identity(build_mesh(d, level));
      EXPECT_TRUE(di.holds()) << di.bubble_dim << " vs " << di.z0_dim;
      EXPECT_GT(di.two_boundary_tris, 0);
    }
}

TEST(OperatorNorm, IdentityHasNormOne) {
  const TriMesh m = build_mesh(Domain::square, 2);
  const MixedSpaces sp = build_mixed_spaces(Element::taylor_hood, m);
  const SparseMatrix M = assemble(MatrixKind::mass_v, sp, m);
  const LinearMap id = [](const VectorXd& x) { return x; };
  EXPECT_NEAR(operator_norm(M.rows(), id, id, M, M), 1.0, 1e-8);
  const SparseMatrix M4 = 4.0 * M;
  EXPECT_NEAR(operator_norm(M.rows(), id, id, M, M4), 2.0, 1e-8);
}

TEST(BubbleInfSup, PositiveAndConsistent) {
  for (Domain d : kDomains) {
    const BubbleInfSup b = bubble_infsup(build_mesh(d, 3));
    EXPECT_GT(b.c0, 0.0);
    EXPECT_NEAR(b.c0, b.c0_eig, 1e-8);
    EXPECT_GT(b.phi_bound, 0.0);
    EXPECT_LE(b.phi_bound, b.c0 + 1e-12);
    EXPECT_GT(b.sigma_min_gram, 0.0);
  }
}

TEST(NormEquivalence, BoundedAcrossLevels) {
  for (int level = 2; level <= 4; ++level) {
    const TriMesh m = build_mesh(Domain::lshape, level);
    const NormEquivalence n = norm_equivalence(m, phi_map(m));
    EXPECT_GT(n.v_min, 0.0);
    EXPECT_GE(n.v_max, n.v_min);
    EXPECT_GT(n.z_min, 0.0);
    EXPECT_GE(n.z_max, n.z_min);
    EXPECT_LT(n.v_max / n.v_min, 1e3);
    EXPECT_LT(n.z_max / n.z_min, 1e3);
  }
}

TEST(FortinReport, PassesOnAdmissibleMeshes) {
  for (Element el : {Element::taylor_hood, Element::mini}) {
    const FortinReport r = fortin_report(el, build_mesh(Domain::lshape, 2), 5, 1u, true);
    EXPECT_TRUE(r.passed());
    EXPECT_LT(r.transpose_defect, 1e-12);
    EXPECT_GE(r.norms.l2, 1.0 - 1e-8);  // Pi reproduces the coarse space
    EXPECT_GT(r.norms.h1, 1.0);
    EXPECT_EQ(r.dims.has_value(), el == Element::taylor_hood);
  }
}
