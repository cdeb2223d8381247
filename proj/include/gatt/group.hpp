#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace gatt {

/// Point groups with exact actions on the integer grid.
enum class GroupName { C1, C2, C4, D4 };

/// Accepts c1/c2/c4/d4 and the wallpaper aliases z2, p4, p4m (case-insensitive).
GroupName parse_group_name(std::string_view text);
std::string to_string(GroupName name);

using Vec2i = std::array<long, 2>;

/// Integer 2x2 matrix [[a, b], [c, d]] acting on column vectors (u, v).
struct Matrix2i {
  long a = 1, b = 0, c = 0, d = 1;

  long det() const { return a * d - b * c; }
  Vec2i operator*(const Vec2i& x) const { return {a * x[0] + b * x[1], c * x[0] + d * x[1]}; }
  Matrix2i operator*(const Matrix2i& m) const {
    return {a * m.a + b * m.c, a * m.b + b * m.d, c * m.a + d * m.c, c * m.b + d * m.d};
  }
  bool operator==(const Matrix2i&) const = default;
};

/// Finite point group H given by its Cayley table and integer grid action.
///
/// Grid vectors are (u, v) with u pointing right (columns) and v pointing up
/// (decreasing rows). Element order is fixed:
///   C1: e
///   C2: e, r180
///   C4: e, r90, r180, r270 (counterclockwise)
///   D4: e, r90, r180, r270, m, m r90, m r180, m r270   with m: (u, v) -> (-u, v)
/// Index 0 is always the identity.
class FiniteGroup {
 public:
  FiniteGroup() : FiniteGroup(GroupName::C1) {}
  explicit FiniteGroup(GroupName name);

  GroupName name() const { return name_; }
  std::size_t order() const { return actions_.size(); }
  static constexpr std::size_t identity() { return 0; }

  std::size_t product(std::size_t a, std::size_t b) const { return cayley_[a * order() + b]; }
  std::size_t inverse(std::size_t h) const { return inverse_[h]; }
  const Matrix2i& action(std::size_t h) const { return actions_[h]; }
  bool is_reflection(std::size_t h) const { return actions_[h].det() < 0; }
  Vec2i act(std::size_t h, const Vec2i& x) const { return actions_[h] * x; }

  /// Index of the element whose action matrix equals m; throws if none.
  std::size_t element_of(const Matrix2i& m) const;

  bool operator==(const FiniteGroup& other) const { return name_ == other.name_; }

 private:
  GroupName name_;
  std::vector<Matrix2i> actions_;
  std::vector<std::size_t> cayley_;
  std::vector<std::size_t> inverse_;
};

FiniteGroup make_group(GroupName name);

/// Element g = (x, h) of the affine group Z^2 x| H.
struct AffineElement {
  Vec2i x{0, 0};
  std::size_t h = 0;

  bool operator==(const AffineElement&) const = default;
};

/// (x1, h1)(x2, h2) = (x1 + h1 x2, h1 h2).
AffineElement compose_affine(const FiniteGroup& grp, const AffineElement& g1, const AffineElement& g2);
/// (x, h)^-1 = (-h^-1 x, h^-1).
AffineElement invert_affine(const FiniteGroup& grp, const AffineElement& g);
/// Action of g on a point: h x + t.
Vec2i act_affine(const FiniteGroup& grp, const AffineElement& g, const Vec2i& point);

}  // namespace gatt
