#pragma once

#include <optional>
#include <string>
#include <vector>

#include "svsde/types.hpp"

namespace svsde {

struct WallSegment {
  Vec2 a;
  Vec2 b;
};

struct NamedSection {
  std::string name;
  double x_lo, y_lo, x_hi, y_hi;

  bool contains(double x, double y) const {
    return x >= x_lo && x < x_hi && y >= y_lo && y < y_hi;
  }
};

/// Rectangular nest with internal wall segments, doorway intervals cut out
/// of them, and named rectangular sections for first-passage accounting.
struct NestGeometry {
  double x_lo = 0, y_lo = 0, x_hi = 1, y_hi = 1;
  std::vector<WallSegment> walls;      // as configured (doorways still present)
  std::vector<WallSegment> doorways;   // open intervals lying on walls
  std::vector<NamedSection> sections;
  std::optional<Vec2> exit;

  /// Walls with doorway intervals removed, plus the outer boundary.
  /// Built once by finalize().
  std::vector<WallSegment> solid;

  void finalize();

  bool contains(double x, double y) const {
    return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi;
  }
  /// Index into sections, or -1.
  int section_of(double x, double y) const;
};

/// Parse the geometry config (JSON): bounds, walls, doorways, sections, exit.
NestGeometry load_geometry(const std::string& path);
void save_geometry(const NestGeometry& g, const std::string& path);

/// The four-chamber nest used throughout: 65mm x 160mm, chambers I (top)
/// through IV (bottom), 6mm doors between chambers, 12mm mid-chamber
/// passages, sections Ia..IVb top to bottom, exit at the bottom left.
NestGeometry four_chamber_nest();

/// First intersection parameter t in (0, 1] of segment p->q with s, or
/// nullopt if they do not cross.
std::optional<double> segment_intersection(const Vec2& p, const Vec2& q,
                                           const WallSegment& s);

}  // namespace svsde
