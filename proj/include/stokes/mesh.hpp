#pragma once

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stokes/bary.hpp"

namespace stokes {

using Index = Eigen::Index;
using Point = Eigen::Vector2d;

/// The three benchmark domains: unit square, L-shape (upper-right quarter
/// removed) and the square with the slit {y = 1/2, 1/2 <= x <= 1} removed.
enum class Domain { square, lshape, slit };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view name);

enum class EdgeKind { interior, boundary };
enum class TriKind { interior, one_boundary_edge, two_boundary_edges };

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structured triangulation. Vertices are in row-major (y, then x) order,
/// triangles are counterclockwise and edges are sorted by their vertex pair.
struct TriMesh {
  Domain domain = Domain::square;
  int level = 0;
  std::vector<Point> vertices;
  std::vector<std::array<Index, 3>> triangles;
  std::vector<std::array<Index, 2>> edges;  // (lo, hi) vertex ids, lo < hi
  std::vector<EdgeKind> edge_kind;
  std::vector<TriKind> tri_kind;
  std::vector<double> tri_area;
  std::vector<std::array<Index, 3>> tri_edges;      // local edge k is opposite local vertex k
  std::vector<std::array<Index, 2>> edge_tris;      // -1 for a missing neighbour
  std::vector<bool> boundary_vertex;
  double h = 0.0;  // max_T h_T

  Index num_vertices() const { return static_cast<Index>(vertices.size()); }
  Index num_edges() const { return static_cast<Index>(edges.size()); }
  Index num_triangles() const { return static_cast<Index>(triangles.size()); }

  /// Nominal grid step 2^-level.
  double nominal_h() const;
  double measure() const;
  TriangleGeometry<double> geometry(Index t) const;
  double tri_diameter(Index t) const;
  /// Position (0..2) of the edge within triangle t, or -1.
  int local_edge_index(Index t, Index e) const;
  /// Position (0..2) of the vertex within triangle t, or -1.
  int local_vertex_index(Index t, Index v) const;
};

/// Uniform right-triangle grid with n = 2^level squares per unit side, every
/// square split along its lower-left to upper-right diagonal.
TriMesh build_mesh(Domain domain, int level);

/// Triangle kinds and the edge partition used by the Taylor-Hood analysis.
struct EdgePartition {
  std::vector<Index> interior;         // all interior edges
  std::vector<Index> boundary;
  std::vector<Index> interior_single;  // interior edges that are not e_T
  std::vector<Index> interior_macro;   // e_T for T with two boundary edges
  std::vector<Index> tris_interior;
  std::vector<Index> tris_one_boundary;
  std::vector<Index> tris_two_boundary;
};

EdgePartition classify(const TriMesh& mesh);

/// T (two boundary edges) together with its partner T- across the interior edge e_T.
/// Vertex labels: x1, x2 are the endpoints of e_T (x1 < x2 by id), x0 the
/// remaining vertex of T, x3 the remaining vertex of T-.
struct Macroelement {
  Index boundary_tri = -1;
  Index partner_tri = -1;
  Index shared_edge = -1;
  std::array<Index, 4> vertex_ids{-1, -1, -1, -1};  // x0, x1, x2, x3
  Point hat_x0 = Point::Zero();                      // x1 + x2 - x3
  bool partner_is_interior = true;
};

enum class PartnerPolicy {
  require_interior,  // reject meshes where some T- is a boundary triangle
  allow_boundary,    // return every macroelement, flagging inadmissible ones
};

std::vector<Macroelement> macroelements(const TriMesh& mesh, PartnerPolicy policy = PartnerPolicy::require_interior);

struct ShapeMetrics {
  double gamma0 = 0.0;     // max h_T^2 / |T|
  double gamma1 = 0.0;     // min h_T / h
  double alpha_min = 1.0;  // min over macroelements of 1 - l1(hat x0) - l2(hat x0)
};

ShapeMetrics shape_metrics(const TriMesh& mesh);

/// 1 - l1(hat x0) - l2(hat x0) for the barycentric coordinates of T.
double macro_alpha(const TriMesh& mesh, const Macroelement& m);

/// Plain-text export: "v x y", "t i j k", "e i j kind" lines.
void write_mesh(std::ostream& os, const TriMesh& mesh);

}  // namespace stokes
