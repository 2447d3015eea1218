#include "stokes/assembly.hpp"

#include <algorithm>
#include <iomanip>
#include <locale>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace stokes {

std::string_view to_string(Element e) { return e == Element::taylor_hood ? "taylor_hood" : "mini"; }

Element parse_element(std::string_view name) {
  if (name == "taylor_hood" || name == "th") return Element::taylor_hood;
  if (name == "mini") return Element::mini;
  throw std::invalid_argument("unknown element '" + std::string(name) + "'");
}

ReferenceTables::ReferenceTables(std::vector<BaryPoly<double>> b) : basis(std::move(b)) {
  const auto n = static_cast<Index>(basis.size());
  mass.resize(n, n);
  stiff.assign(basis.size(), std::vector<Eigen::Matrix3d>(basis.size()));
  div_p1.assign(3, std::vector<Eigen::Vector3d>(basis.size()));
  for (Index a = 0; a < n; ++a) {
    const auto& pa = basis[static_cast<std::size_t>(a)];
    for (Index b2 = 0; b2 < n; ++b2) {
      const auto& pb = basis[static_cast<std::size_t>(b2)];
      mass(a, b2) = (pa * pb).integrate(1.0);
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) stiff[static_cast<std::size_t>(a)][static_cast<std::size_t>(b2)](k, l) = (pa.derivative(k) * pb.derivative(l)).integrate(1.0);
    }
    for (int q = 0; q < 3; ++q)
      for (int k = 0; k < 3; ++k)
        div_p1[static_cast<std::size_t>(q)][static_cast<std::size_t>(a)](k) = (BaryPoly<double>::lambda(q) * pa.derivative(k)).integrate(1.0);
  }
}

const ReferenceTables& p2_reference() {
  static const ReferenceTables r = [] {
    const auto b = p2_basis<double>();
    return ReferenceTables(std::vector<BaryPoly<double>>(b.begin(), b.end()));
  }();
  return r;
}

const ReferenceTables& p1_reference() {
  static const ReferenceTables r = [] {
    const auto b = p1_basis<double>();
    return ReferenceTables(std::vector<BaryPoly<double>>(b.begin(), b.end()));
  }();
  return r;
}

const ReferenceTables& mini_reference() {
  static const ReferenceTables r = [] {
    const auto b = p1_basis<double>();
    std::vector<BaryPoly<double>> v(b.begin(), b.end());
    v.push_back(BaryPoly<double>::monomial(1, 1, 1, 60.0));
    return ReferenceTables(std::move(v));
  }();
  return r;
}

namespace {

Eigen::Matrix3d grad_gram(const TriangleGeometry<double>& g) {
  Eigen::Matrix3d G;
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) G(k, l) = g.grad_lambda[static_cast<std::size_t>(k)].dot(g.grad_lambda[static_cast<std::size_t>(l)]);
  return G;
}

// Local velocity basis on one triangle: scalar function index, component and
// global column (-1 when eliminated).
struct LocalVelocity {
  const ReferenceTables* ref = nullptr;
  VectorXd scale;
  std::vector<int> func;
  std::vector<int> comp;
  std::vector<Index> col;
};

LocalVelocity local_velocity(const MixedSpaces& sp, const TriMesh& mesh, Index t, bool eliminate) {
  LocalVelocity lv;
  const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
  const Index nv = mesh.num_vertices();
  auto column = [&](Index dof) { return eliminate ? sp.velocity.free_of_dof[static_cast<std::size_t>(dof)] : dof; };
  if (sp.element == Element::taylor_hood) {
    lv.ref = &p2_reference();
    lv.scale = VectorXd::Ones(6);
    for (int a = 0; a < 6; ++a) {
      const Index node = a < 3 ? tri[a] : nv + mesh.tri_edges[static_cast<std::size_t>(t)][a - 3];
      for (int c = 0; c < 2; ++c) {
        lv.func.push_back(a);
        lv.comp.push_back(c);
        lv.col.push_back(column(2 * node + c));
      }
    }
  } else {
    lv.ref = &mini_reference();
    lv.scale = VectorXd::Ones(4);
    lv.scale(3) = 1.0 / mesh.tri_area[static_cast<std::size_t>(t)];
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 2; ++c) {
        lv.func.push_back(a);
        lv.comp.push_back(c);
        lv.col.push_back(column(2 * tri[a] + c));
      }
    const Index offset = eliminate ? sp.velocity.dim() : sp.velocity.n_dofs;
    for (int c = 0; c < 2; ++c) {
      lv.func.push_back(3);
      lv.comp.push_back(c);
      lv.col.push_back(offset + 2 * t + c);
    }
  }
  return lv;
}

using Triplets = std::vector<Eigen::Triplet<double>>;

void element_triplets(MatrixKind kind, const MixedSpaces& sp, const TriMesh& mesh, Index t, bool eliminate, Triplets& out) {
  const auto g = mesh.geometry(t);
  const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
  if (kind == MatrixKind::mass_p || kind == MatrixKind::stiff_p) {
    const VectorXd one = VectorXd::Ones(3);
    const MatrixXd E = kind == MatrixKind::mass_p ? element_mass(p1_reference(), g, one) : element_stiffness(p1_reference(), g, one);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) out.emplace_back(tri[a], tri[b], E(a, b));
    return;
  }
  const LocalVelocity lv = local_velocity(sp, mesh, t, eliminate);
  const auto n = lv.func.size();
  if (kind == MatrixKind::div) {
    for (int q = 0; q < 3; ++q) {
      for (std::size_t i = 0; i < n; ++i) {
        if (lv.col[i] < 0) continue;
        const auto& d = lv.ref->div_p1[static_cast<std::size_t>(q)][static_cast<std::size_t>(lv.func[i])];
        double v = 0.0;
        for (int k = 0; k < 3; ++k) v += d(k) * g.grad_lambda[static_cast<std::size_t>(k)](lv.comp[i]);
        out.emplace_back(tri[q], lv.col[i], v * g.area * lv.scale(lv.func[i]));
      }
    }
    return;
  }
  const MatrixXd E = kind == MatrixKind::mass_v ? element_mass(*lv.ref, g, lv.scale) : element_stiffness(*lv.ref, g, lv.scale);
  for (std::size_t i = 0; i < n; ++i) {
    if (lv.col[i] < 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (lv.col[j] < 0 || lv.comp[i] != lv.comp[j]) continue;
      out.emplace_back(lv.col[i], lv.col[j], E(lv.func[i], lv.func[j]));
    }
  }
}

}  // namespace

MatrixXd element_mass(const ReferenceTables& ref, const TriangleGeometry<double>& g, const VectorXd& scale) {
  return g.area * scale.asDiagonal() * ref.mass * scale.asDiagonal();
}

MatrixXd element_stiffness(const ReferenceTables& ref, const TriangleGeometry<double>& g, const VectorXd& scale) {
  const Eigen::Matrix3d G = grad_gram(g);
  const auto n = static_cast<Index>(ref.basis.size());
  MatrixXd E(n, n);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b)
      E(a, b) = g.area * scale(a) * scale(b) * ref.stiff[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)].cwiseProduct(G).sum();
  return E;
}

MixedSpaces build_mixed_spaces(Element element, const TriMesh& mesh) {
  MixedSpaces s;
  s.element = element;
  s.velocity = build_space(element == Element::taylor_hood ? SpaceKind::p2_vec : SpaceKind::p1_vec, mesh);
  if (element == Element::mini) s.bubble = build_space(SpaceKind::mini_bubble_vec, mesh);
  s.pressure = build_space(SpaceKind::p1_scalar, mesh);
  return s;
}

SparseMatrix assemble(MatrixKind kind, const MixedSpaces& spaces, const TriMesh& mesh, const AssemblyOptions& opts) {
  if (spaces.pressure.n_dofs != mesh.num_vertices()) throw std::invalid_argument("assemble: spaces do not match mesh");
  if (spaces.bubble && spaces.bubble->n_dofs != 2 * mesh.num_triangles())
    throw std::invalid_argument("assemble: spaces do not match mesh");
  const Index nv = opts.eliminate_dirichlet ? spaces.velocity_dim() : spaces.velocity_dofs();
  const Index np = spaces.pressure.n_dofs;
  Index rows = 0, cols = 0;
  switch (kind) {
    case MatrixKind::mass_v:
    case MatrixKind::stiff_v:
      rows = cols = nv;
      break;
    case MatrixKind::div:
      rows = np;
      cols = nv;
      break;
    case MatrixKind::mass_p:
    case MatrixKind::stiff_p:
      rows = cols = np;
      break;
  }

  const Index nt = mesh.num_triangles();
  const int nthreads = std::max(1, std::min<int>(opts.threads, static_cast<int>(nt)));
  std::vector<Triplets> chunks(static_cast<std::size_t>(nthreads));
  auto work = [&](int w) {
    const Index begin = nt * w / nthreads, end = nt * (w + 1) / nthreads;
    for (Index t = begin; t < end; ++t) element_triplets(kind, spaces, mesh, t, opts.eliminate_dirichlet, chunks[static_cast<std::size_t>(w)]);
  };
  if (nthreads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nthreads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  // Concatenating in chunk order reproduces the serial triplet sequence exactly.
  Triplets all;
  for (auto& c : chunks) all.insert(all.end(), c.begin(), c.end());
  SparseMatrix A(rows, cols);
  A.setFromTriplets(all.begin(), all.end());
  return A;
}

SparseMatrix SaddleSystem::velocity_block() const {
  SparseMatrix A = M + (eps * eps) * K;
  return A;
}

SparseMatrix SaddleSystem::matrix() const {
  const Index nv = velocity_dim(), np = pressure_dim();
  const SparseMatrix A = velocity_block();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(A.nonZeros() + 2 * B.nonZeros()));
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (Index k = 0; k < B.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(B, k); it; ++it) {
      trip.emplace_back(nv + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), nv + it.row(), it.value());
    }
  SparseMatrix S(nv + np, nv + np);
  S.setFromTriplets(trip.begin(), trip.end());
  return S;
}

SaddleSystem build_saddle(double eps, const MixedSpaces& spaces, const TriMesh& mesh, const AssemblyOptions& opts) {
  if (!(eps > 0.0)) throw std::invalid_argument("build_saddle: eps must be positive");
  SaddleSystem s;
  s.eps = eps;
  s.M = assemble(MatrixKind::mass_v, spaces, mesh, opts);
  s.K = assemble(MatrixKind::stiff_v, spaces, mesh, opts);
  s.B = assemble(MatrixKind::div, spaces, mesh, opts);
  s.null_vec = VectorXd::Zero(s.size());
  s.null_vec.tail(s.pressure_dim()).setOnes();
  return s;
}

void write_coo(std::ostream& os, const SparseMatrix& A) {
  const auto old_locale = os.imbue(std::locale::classic());
  const auto old_prec = os.precision(17);
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  os.precision(old_prec);
  os.imbue(old_locale);
}

}  // namespace stokes
