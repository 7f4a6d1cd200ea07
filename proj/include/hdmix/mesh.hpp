#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

namespace hdmix {

/// Boundary part tags: 1 clamped, 2 traction, 3 contact.
enum class BoundaryPart : int { Clamped = 1, Traction = 2, Contact = 3 };

struct BoundaryEdge {
  int a = 0;
  int b = 0;
  BoundaryPart tag = BoundaryPart::Traction;
};

/// 2D triangulation with tagged boundary edges. Triangles are counterclockwise.
struct Mesh {
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> edges;

  double area(std::size_t tri) const;
  /// Throws ValidationError when an invariant fails: positive areas, every
  /// boundary edge of the triangulation tagged exactly once, tagged edges on
  /// the boundary, at least one clamped edge.
  void validate() const;
};

/// Tag per side of a rectangle.
struct RectBoundary {
  BoundaryPart bottom = BoundaryPart::Contact;
  BoundaryPart right = BoundaryPart::Traction;
  BoundaryPart top = BoundaryPart::Traction;
  BoundaryPart left = BoundaryPart::Clamped;
};

/// Structured mesh of [0, width] x [0, height] with (nx+1)(ny+1) nodes and two
/// triangles per cell; the cell diagonal alternates in a checkerboard pattern.
Mesh generate_rect_mesh(int nx, int ny, double width, double height, RectBoundary sides = {});

/// Text format: `N T E` counts, then `id x y`, `id n1 n2 n3`, `id n1 n2 tag`
/// records. Ids are 0-based; `#` starts a comment.
Mesh read_mesh(std::istream& in);
Mesh read_mesh_file(const std::filesystem::path& path);
void write_mesh(std::ostream& out, const Mesh& mesh);

}  // namespace hdmix
