#pragma once

// Polynomials in barycentric coordinates on a single triangle, and their
// exact integrals. Every element integral in the library goes through
// bary_moment; there is no floating quadrature in the core path.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace stokes {

/// Exponent triple (a1, a2, a3) of the monomial l1^a1 l2^a2 l3^a3.
struct BaryMonomial {
  std::array<int, 3> alpha{0, 0, 0};

  int degree() const { return alpha[0] + alpha[1] + alpha[2]; }
  bool operator<(const BaryMonomial& o) const { return alpha < o.alpha; }
  bool operator==(const BaryMonomial& o) const { return alpha == o.alpha; }
};

namespace detail {

inline std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int k = 2; k <= n; ++k) f *= static_cast<std::uint64_t>(k);
  return f;
}

}  // namespace detail

/// Reduced fraction num/den with 2 a! / (2 + |a|)! = num/den. Exact for |a| <= 18.
inline std::pair<std::uint64_t, std::uint64_t> bary_moment_ratio(const BaryMonomial& m) {
  for (int a : m.alpha) {
    if (a < 0) throw std::invalid_argument("bary_moment: negative exponent");
  }
  if (m.degree() > 18) throw std::invalid_argument("bary_moment: degree too large for exact evaluation");
  std::uint64_t num = 2;
  for (int a : m.alpha) num *= detail::factorial(a);
  std::uint64_t den = detail::factorial(2 + m.degree());
  const std::uint64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

/// Exact integral of the barycentric monomial over a triangle of the given area.
template <typename Scalar>
Scalar bary_moment(const BaryMonomial& m, const Scalar& area) {
  const auto [num, den] = bary_moment_ratio(m);
  return Scalar(static_cast<long double>(num)) / Scalar(static_cast<long double>(den)) * area;
}

/// Polynomial in (l1, l2, l3) with sparse coefficient storage. Ordered map keeps
/// iteration, and therefore every floating-point sum, deterministic.
template <typename Scalar>
class BaryPoly {
 public:
  using Terms = std::map<BaryMonomial, Scalar>;

  BaryPoly() = default;
  explicit BaryPoly(const Scalar& c) {
    if (c != Scalar(0)) terms_[BaryMonomial{}] = c;
  }

  static BaryPoly constant(const Scalar& c) { return BaryPoly(c); }
  static BaryPoly monomial(int a1, int a2, int a3, const Scalar& c = Scalar(1)) {
    BaryPoly p;
    p.terms_[BaryMonomial{{a1, a2, a3}}] = c;
    return p;
  }
  /// The barycentric coordinate l_k, k in {0,1,2}.
  static BaryPoly lambda(int k) {
    std::array<int, 3> a{0, 0, 0};
    a[static_cast<std::size_t>(k)] = 1;
    BaryPoly p;
    p.terms_[BaryMonomial{a}] = Scalar(1);
    return p;
  }

  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  BaryPoly& operator+=(const BaryPoly& o) {
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  BaryPoly& operator-=(const BaryPoly& o) {
    for (const auto& [m, c] : o.terms_) add_term(m, -c);
    return *this;
  }
  BaryPoly& operator*=(const Scalar& s) {
    if (s == Scalar(0)) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
  }

  friend BaryPoly operator+(BaryPoly a, const BaryPoly& b) { return a += b; }
  friend BaryPoly operator-(BaryPoly a, const BaryPoly& b) { return a -= b; }
  friend BaryPoly operator*(BaryPoly a, const Scalar& s) { return a *= s; }
  friend BaryPoly operator*(const Scalar& s, BaryPoly a) { return a *= s; }
  friend BaryPoly operator-(BaryPoly a) { return a *= Scalar(-1); }

  friend BaryPoly operator*(const BaryPoly& a, const BaryPoly& b) {
    BaryPoly r;
    for (const auto& [ma, ca] : a.terms_) {
      for (const auto& [mb, cb] : b.terms_) {
        BaryMonomial m;
        for (int k = 0; k < 3; ++k) m.alpha[k] = ma.alpha[k] + mb.alpha[k];
        r.add_term(m, ca * cb);
      }
    }
    return r;
  }

  /// Partial derivative with respect to l_k (l1, l2, l3 treated as independent).
  BaryPoly derivative(int k) const {
    BaryPoly r;
    for (const auto& [m, c] : terms_) {
      const int a = m.alpha[static_cast<std::size_t>(k)];
      if (a == 0) continue;
      BaryMonomial d = m;
      d.alpha[static_cast<std::size_t>(k)] -= 1;
      r.add_term(d, c * Scalar(a));
    }
    return r;
  }

  Scalar operator()(const std::array<Scalar, 3>& l) const {
    Scalar s(0);
    for (const auto& [m, c] : terms_) {
      Scalar t = c;
      for (int k = 0; k < 3; ++k)
        for (int p = 0; p < m.alpha[k]; ++p) t *= l[static_cast<std::size_t>(k)];
      s += t;
    }
    return s;
  }

  /// Exact integral over a triangle of the given area.
  Scalar integrate(const Scalar& area) const {
    Scalar s(0);
    for (const auto& [m, c] : terms_) s += c * bary_moment(m, area);
    return s;
  }

  /// Re-express in another set of barycentric coordinates mu, given
  /// l_i = sum_k map(i, k) mu_k (affine change of triangle).
  BaryPoly substitute(const Eigen::Matrix<Scalar, 3, 3>& map) const {
    std::array<BaryPoly, 3> lin;
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) {
        if (map(i, k) != Scalar(0)) lin[i].add_term(BaryMonomial{unit(k)}, map(i, k));
      }
    }
    BaryPoly r;
    for (const auto& [m, c] : terms_) {
      BaryPoly t(c);
      for (int k = 0; k < 3; ++k)
        for (int p = 0; p < m.alpha[k]; ++p) t = t * lin[static_cast<std::size_t>(k)];
      r += t;
    }
    return r;
  }

 private:
  static std::array<int, 3> unit(int k) {
    std::array<int, 3> a{0, 0, 0};
    a[static_cast<std::size_t>(k)] = 1;
    return a;
  }

  void add_term(const BaryMonomial& m, const Scalar& c) {
    if (c == Scalar(0)) return;
    auto it = terms_.find(m);
    if (it == terms_.end()) {
      terms_.emplace(m, c);
      return;
    }
    it->second += c;
    if (it->second == Scalar(0)) terms_.erase(it);
  }

  Terms terms_;
};

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

/// Affine triangle data: vertices (in the local order that defines l1, l2, l3),
/// signed area and the constant gradients of the barycentric coordinates.
template <typename Scalar>
struct TriangleGeometry {
  std::array<Vec2<Scalar>, 3> x;
  Scalar area{0};  // |T| > 0
  std::array<Vec2<Scalar>, 3> grad_lambda;

  TriangleGeometry() = default;
  TriangleGeometry(const Vec2<Scalar>& a, const Vec2<Scalar>& b, const Vec2<Scalar>& c) : x{a, b, c} {
    const Scalar det = (b - a)(0) * (c - a)(1) - (b - a)(1) * (c - a)(0);
    if (det == Scalar(0)) throw std::invalid_argument("TriangleGeometry: degenerate triangle");
    area = det > Scalar(0) ? det / Scalar(2) : -det / Scalar(2);
    // grad l_i is the inward normal of the opposite edge scaled by 1/(2|T| signed).
    for (int i = 0; i < 3; ++i) {
      const Vec2<Scalar>& p = x[static_cast<std::size_t>((i + 1) % 3)];
      const Vec2<Scalar>& q = x[static_cast<std::size_t>((i + 2) % 3)];
      grad_lambda[static_cast<std::size_t>(i)] = Vec2<Scalar>(p(1) - q(1), q(0) - p(0)) / det;
    }
  }

  /// Barycentric coordinates of an arbitrary point (extended affinely outside T).
  std::array<Scalar, 3> barycentric(const Vec2<Scalar>& p) const {
    std::array<Scalar, 3> l;
    for (int i = 0; i < 3; ++i) {
      const auto& xj = x[static_cast<std::size_t>((i + 1) % 3)];
      l[static_cast<std::size_t>(i)] = grad_lambda[static_cast<std::size_t>(i)].dot(p - xj);
    }
    return l;
  }

  Scalar diameter() const {
    Scalar d(0);
    for (int i = 0; i < 3; ++i) {
      const Scalar e = (x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>((i + 1) % 3)]).norm();
      d = std::max(d, e);
    }
    return d;
  }
};

/// Vector field on one triangle: each component is a barycentric polynomial.
/// Equivalent to a sum of (constant vector) * (barycentric monomial) terms.
template <typename Scalar>
struct LocalField {
  std::array<BaryPoly<Scalar>, 2> comp;

  LocalField() = default;
  LocalField(BaryPoly<Scalar> cx, BaryPoly<Scalar> cy) : comp{std::move(cx), std::move(cy)} {}

  /// The field p * v for a scalar polynomial p and a constant vector v.
  static LocalField times(const BaryPoly<Scalar>& p, const Vec2<Scalar>& v) {
    return LocalField(p * v(0), p * v(1));
  }

  int degree() const { return std::max(comp[0].degree(), comp[1].degree()); }

  LocalField& operator+=(const LocalField& o) {
    comp[0] += o.comp[0];
    comp[1] += o.comp[1];
    return *this;
  }
  LocalField& operator*=(const Scalar& s) {
    comp[0] *= s;
    comp[1] *= s;
    return *this;
  }
  friend LocalField operator+(LocalField a, const LocalField& b) { return a += b; }
  friend LocalField operator-(LocalField a, const LocalField& b) {
    a.comp[0] -= b.comp[0];
    a.comp[1] -= b.comp[1];
    return a;
  }
  friend LocalField operator*(const Scalar& s, LocalField a) { return a *= s; }

  Vec2<Scalar> operator()(const std::array<Scalar, 3>& l) const { return Vec2<Scalar>(comp[0](l), comp[1](l)); }

  LocalField substitute(const Eigen::Matrix<Scalar, 3, 3>& map) const {
    return LocalField(comp[0].substitute(map), comp[1].substitute(map));
  }
};

template <typename Scalar>
BaryPoly<Scalar> dot(const LocalField<Scalar>& a, const LocalField<Scalar>& b) {
  return a.comp[0] * b.comp[0] + a.comp[1] * b.comp[1];
}

template <typename Scalar>
BaryPoly<Scalar> dot(const LocalField<Scalar>& a, const Vec2<Scalar>& v) {
  return a.comp[0] * v(0) + a.comp[1] * v(1);
}

/// Gradient of a scalar polynomial on the triangle: sum_k d p / d l_k * grad l_k.
template <typename Scalar>
LocalField<Scalar> gradient(const BaryPoly<Scalar>& p, const TriangleGeometry<Scalar>& T) {
  LocalField<Scalar> g;
  for (int k = 0; k < 3; ++k) g += LocalField<Scalar>::times(p.derivative(k), T.grad_lambda[static_cast<std::size_t>(k)]);
  return g;
}

template <typename Scalar>
BaryPoly<Scalar> divergence(const LocalField<Scalar>& f, const TriangleGeometry<Scalar>& T) {
  BaryPoly<Scalar> d;
  for (int k = 0; k < 3; ++k) {
    const auto& g = T.grad_lambda[static_cast<std::size_t>(k)];
    d += f.comp[0].derivative(k) * g(0) + f.comp[1].derivative(k) * g(1);
  }
  return d;
}

/// Two-dimensional curl z = d z1 / dx2 - d z2 / dx1.
template <typename Scalar>
BaryPoly<Scalar> curl(const LocalField<Scalar>& f, const TriangleGeometry<Scalar>& T) {
  BaryPoly<Scalar> c;
  for (int k = 0; k < 3; ++k) {
    const auto& g = T.grad_lambda[static_cast<std::size_t>(k)];
    c += f.comp[0].derivative(k) * g(1) - f.comp[1].derivative(k) * g(0);
  }
  return c;
}

/// b_T = (60/|T|) l1 l2 l3, normalized so that its integral over T is 1.
template <typename Scalar>
BaryPoly<Scalar> cell_bubble(const TriangleGeometry<Scalar>& T) {
  return BaryPoly<Scalar>::monomial(1, 1, 1, Scalar(60) / T.area);
}

/// Tangential edge bubble 6 l_i l_j (x_j - x_i) for the local edge (i -> j).
template <typename Scalar>
LocalField<Scalar> edge_bubble(const TriangleGeometry<Scalar>& T, int i, int j) {
  const BaryPoly<Scalar> b = BaryPoly<Scalar>::lambda(i) * BaryPoly<Scalar>::lambda(j) * Scalar(6);
  return LocalField<Scalar>::times(b, T.x[static_cast<std::size_t>(j)] - T.x[static_cast<std::size_t>(i)]);
}

/// Normal edge bubble 6 l_i l_j n, n the tangent (x_j - x_i) rotated by +90 degrees.
template <typename Scalar>
LocalField<Scalar> normal_edge_bubble(const TriangleGeometry<Scalar>& T, int i, int j) {
  const Vec2<Scalar> t = T.x[static_cast<std::size_t>(j)] - T.x[static_cast<std::size_t>(i)];
  const BaryPoly<Scalar> b = BaryPoly<Scalar>::lambda(i) * BaryPoly<Scalar>::lambda(j) * Scalar(6);
  return LocalField<Scalar>::times(b, Vec2<Scalar>(-t(1), t(0)));
}

/// Whitney form l_i grad l_j - l_j grad l_i for the local edge (i -> j).
template <typename Scalar>
LocalField<Scalar> whitney(const TriangleGeometry<Scalar>& T, int i, int j) {
  return LocalField<Scalar>::times(BaryPoly<Scalar>::lambda(i), T.grad_lambda[static_cast<std::size_t>(j)]) -
         LocalField<Scalar>::times(BaryPoly<Scalar>::lambda(j), T.grad_lambda[static_cast<std::size_t>(i)]);
}

/// Constant field grad l_i.
template <typename Scalar>
LocalField<Scalar> grad_lambda_field(const TriangleGeometry<Scalar>& T, int i) {
  return LocalField<Scalar>::times(BaryPoly<Scalar>(Scalar(1)), T.grad_lambda[static_cast<std::size_t>(i)]);
}

/// G(a, b) = integral over T of A[a] . B[b].
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> local_gram(const std::vector<LocalField<Scalar>>& A,
                                                                 const std::vector<LocalField<Scalar>>& B,
                                                                 const TriangleGeometry<Scalar>& T) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> G(A.size(), B.size());
  for (std::size_t a = 0; a < A.size(); ++a)
    for (std::size_t b = 0; b < B.size(); ++b) G(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = dot(A[a], B[b]).integrate(T.area);
  return G;
}

/// Scalar P2 Lagrange basis: vertex functions l_i (2 l_i - 1) for i = 0..2,
/// then edge functions 4 l_i l_j for the local edges (1,2), (2,0), (0,1).
template <typename Scalar>
std::array<BaryPoly<Scalar>, 6> p2_basis() {
  using P = BaryPoly<Scalar>;
  std::array<P, 6> b;
  for (int i = 0; i < 3; ++i) b[static_cast<std::size_t>(i)] = P::lambda(i) * (P::lambda(i) * Scalar(2) - P(Scalar(1)));
  b[3] = P::lambda(1) * P::lambda(2) * Scalar(4);
  b[4] = P::lambda(2) * P::lambda(0) * Scalar(4);
  b[5] = P::lambda(0) * P::lambda(1) * Scalar(4);
  return b;
}

template <typename Scalar>
std::array<BaryPoly<Scalar>, 3> p1_basis() {
  using P = BaryPoly<Scalar>;
  return {P::lambda(0), P::lambda(1), P::lambda(2)};
}

/// Local edge k of a triangle joins the two vertices other than k.
inline std::array<int, 2> local_edge_vertices(int k) { return {(k + 1) % 3, (k + 2) % 3}; }

}  // namespace stokes
