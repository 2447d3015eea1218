#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stokes/bary.hpp"

using namespace stokes;
using P = BaryPoly<double>;
using V = Vec2<double>;

namespace {

// Gauss-Legendre nodes/weights on [0, 1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5)), dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
    w[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Collapsed-coordinate (Duffy) tensor quadrature of f(l1, l2, l3) over T.
template <class F>
double tri_quad(const TriangleGeometry<double>& T, F f, int n = 12) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double a = x[static_cast<std::size_t>(i)], b = x[static_cast<std::size_t>(j)];
      const double l1 = a, l2 = (1.0 - a) * b;
      s += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)] * (1.0 - a) * f(std::array<double, 3>{1.0 - l1 - l2, l1, l2});
    }
  return 2.0 * T.area * s;
}

// Line integral of g(l) along the segment from vertex i to vertex j.
template <class F>
double edge_quad(int i, int j, double length, F g, int n = 8) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  double s = 0.0;
  for (int k = 0; k < n; ++k) {
    std::array<double, 3> l{0.0, 0.0, 0.0};
    l[static_cast<std::size_t>(i)] = 1.0 - x[static_cast<std::size_t>(k)];
    l[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(k)];
    s += w[static_cast<std::size_t>(k)] * g(l);
  }
  return s * length;
}

TriangleGeometry<double> skew() { return {V(0.1, -0.2), V(1.3, 0.4), V(0.35, 0.9)}; }

double cross(const V& a, const V& b) { return a(0) * b(1) - a(1) * b(0); }

}  // namespace

TEST(BaryMoment, ClosedFormValues) {
  const double A = 0.37;
  EXPECT_DOUBLE_EQ(bary_moment(BaryMonomial{{0, 0, 0}}, A), A);
  EXPECT_DOUBLE_EQ(bary_moment(BaryMonomial{{1, 1, 0}}, A), A / 12.0);
  EXPECT_DOUBLE_EQ(bary_moment(BaryMonomial{{1, 1, 1}}, A), A / 60.0);
  EXPECT_DOUBLE_EQ(bary_moment(BaryMonomial{{2, 1, 0}}, A), A / 30.0);
}

TEST(BaryMoment, MatchesQuadratureUpToDegreeEight) {
  const auto T = skew();
  for (int a = 0; a <= 8; ++a)
    for (int b = 0; a + b <= 8; ++b)
      for (int c = 0; a + b + c <= 8; ++c) {
        const double exact = bary_moment(BaryMonomial{{a, b, c}}, T.area);
        const double quad = tri_quad(T, [&](const std::array<double, 3>& l) {
          return std::pow(l[0], a) * std::pow(l[1], b) * std::pow(l[2], c);
        });
        EXPECT_NEAR(exact, quad, 1e-13 * std::abs(quad)) << a << b << c;
      }
}

TEST(BaryMoment, PartitionOfUnityTelescopes) {
  for (int a = 0; a <= 5; ++a)
    for (int b = 0; a + b <= 5; ++b)
      for (int c = 0; a + b + c <= 5; ++c) {
        const double lhs = bary_moment(BaryMonomial{{a + 1, b, c}}, 1.0) + bary_moment(BaryMonomial{{a, b + 1, c}}, 1.0) +
                           bary_moment(BaryMonomial{{a, b, c + 1}}, 1.0);
        EXPECT_NEAR(lhs, bary_moment(BaryMonomial{{a, b, c}}, 1.0), 1e-15);
      }
}

TEST(BaryMoment, RejectsNegativeExponent) {
  EXPECT_THROW(bary_moment(BaryMonomial{{-1, 0, 0}}, 1.0), std::invalid_argument);
}

TEST(CellBubble, NormalizationAndValues) {
  const auto T = skew();
  const P b = cell_bubble(T);
  EXPECT_NEAR(b.integrate(T.area), 1.0, 1e-15);
  EXPECT_NEAR(b({1.0 / 3, 1.0 / 3, 1.0 / 3}), 60.0 / T.area / 27.0, 1e-13);
  EXPECT_EQ(b({0.5, 0.5, 0.0}), 0.0);
  EXPECT_EQ(b({0.0, 0.5, 0.5}), 0.0);
  EXPECT_EQ(b({0.5, 0.0, 0.5}), 0.0);
}

TEST(EdgeBubble, TangentialMoments) {
  const auto T = skew();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const auto psi = edge_bubble(T, i, j);
      const V t = T.x[static_cast<std::size_t>(j)] - T.x[static_cast<std::size_t>(i)];
      const double len = t.norm();
      EXPECT_NEAR(edge_quad(i, j, len, [&](const auto& l) { return psi(l).dot(t); }), std::pow(len, 3), 1e-13);
      for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(psi({k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0, k == 2 ? 1.0 : 0.0}).norm(), 0.0, 1e-15);
        // other edges: the tangential component vanishes identically
        const int a = (k + 1) % 3, c = (k + 2) % 3;
        if ((a == i && c == j) || (a == j && c == i)) continue;
        const V te = (T.x[static_cast<std::size_t>(c)] - T.x[static_cast<std::size_t>(a)]).normalized();
        EXPECT_NEAR(edge_quad(a, c, 1.0, [&](const auto& l) { return psi(l).dot(te); }), 0.0, 1e-15);
      }
    }
}

TEST(Whitney, TangentialMomentsAndCurl) {
  const auto T = skew();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const auto phi = whitney(T, i, j);
      for (int k = 0; k < 3; ++k) {
        const int a = (k + 1) % 3, c = (k + 2) % 3;
        const V d = T.x[static_cast<std::size_t>(c)] - T.x[static_cast<std::size_t>(a)];
        const double m = edge_quad(a, c, d.norm(), [&](const auto& l) { return phi(l).dot(d.normalized()); });
        if (a == i && c == j)
          EXPECT_NEAR(m, 1.0, 1e-14);
        else if (a == j && c == i)
          EXPECT_NEAR(m, -1.0, 1e-14);
        else
          EXPECT_NEAR(m, 0.0, 1e-14);
      }
      const P c = curl(phi, T);
      EXPECT_LE(c.degree(), 0);
      // curl here is d/dx2 of the first component minus d/dx1 of the second
      const double expect = -2.0 * cross(T.grad_lambda[static_cast<std::size_t>(i)], T.grad_lambda[static_cast<std::size_t>(j)]);
      EXPECT_NEAR(c({0.2, 0.3, 0.5}), expect, 1e-12);
    }
}

TEST(LocalGram, BubbleSquareMatchesQuadrature) {
  const auto T = skew();
  const LocalField<double> bx = LocalField<double>::times(cell_bubble(T), V(1.0, 0.0));
  const auto G = local_gram<double>({bx}, {bx}, T);
  const P b = cell_bubble(T);
  const double quad = tri_quad(T, [&](const auto& l) { return b(l) * b(l); });
  EXPECT_NEAR(G(0, 0), quad, 1e-12 * quad);
  EXPECT_NEAR(G(0, 0), 10.0 / 7.0 / T.area, 1e-12 * quad);
}

TEST(LocalGram, InteriorEntries) {
  const auto T = skew();
  std::vector<LocalField<double>> psi, phi;
  for (int k = 0; k < 3; ++k) {
    const auto e = local_edge_vertices(k);
    psi.push_back(edge_bubble(T, e[0], e[1]));
    phi.push_back(whitney(T, e[0], e[1]));
  }
  const auto M = local_gram(psi, phi, T);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(std::abs(M(i, j)), i == j ? 2.0 * T.area / 5.0 : T.area / 10.0, 1e-15);
}

TEST(LocalGram, SymmetricPositiveSemidefinite) {
  const auto T = skew();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<LocalField<double>> A;
  for (int k = 0; k < 6; ++k) {
    LocalField<double> f;
    for (int a = 0; a <= 2; ++a)
      for (int b = 0; a + b <= 2; ++b) f += LocalField<double>::times(P::monomial(a, b, 2 - a - b), V(U(rng), U(rng)));
    A.push_back(f);
  }
  const auto G = local_gram(A, A, T);
  EXPECT_LE((G - G.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-14 * es.eigenvalues().maxCoeff());
}

TEST(Substitute, AffineChangePreservesValues) {
  Eigen::Matrix3d map;
  map << 0.5, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0;
  const P p = P::monomial(2, 1, 0, 3.0) + P::lambda(2);
  const P q = p.substitute(map);
  const std::array<double, 3> mu{0.2, 0.3, 0.5};
  std::array<double, 3> l{};
  for (int i = 0; i < 3; ++i) l[static_cast<std::size_t>(i)] = map(i, 0) * mu[0] + map(i, 1) * mu[1] + map(i, 2) * mu[2];
  EXPECT_NEAR(q(mu), p(l), 1e-15);
}
