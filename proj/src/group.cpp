#include "gatt/group.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "gatt/error.hpp"

namespace gatt {

GroupName parse_group_name(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "c1" || s == "z2") return GroupName::C1;
  if (s == "c2") return GroupName::C2;
  if (s == "c4" || s == "p4") return GroupName::C4;
  if (s == "d4" || s == "p4m") return GroupName::D4;
  throw ConfigError("unsupported group '" + std::string(text) +
                    "': exact grid actions exist only for c1, c2, c4 (p4) and d4 (p4m)");
}

std::string to_string(GroupName name) {
  switch (name) {
    case GroupName::C1: return "c1";
    case GroupName::C2: return "c2";
    case GroupName::C4: return "p4";
    case GroupName::D4: return "p4m";
  }
  return "?";
}

FiniteGroup::FiniteGroup(GroupName name) : name_(name) {
  const Matrix2i r90{0, -1, 1, 0};
  const Matrix2i mirror{-1, 0, 0, 1};
  std::size_t rotations = 1;
  switch (name) {
    case GroupName::C1: rotations = 1; break;
    case GroupName::C2: rotations = 2; break;
    case GroupName::C4:
    case GroupName::D4: rotations = 4; break;
  }
  const std::size_t step = 4 / rotations;
  Matrix2i r;
  for (std::size_t k = 0; k < rotations; ++k) {
    actions_.push_back(r);
    for (std::size_t s = 0; s < step; ++s) r = r90 * r;
  }
  if (name == GroupName::D4)
    for (std::size_t k = 0; k < rotations; ++k) actions_.push_back(mirror * actions_[k]);

  const std::size_t n = actions_.size();
  cayley_.resize(n * n);
  inverse_.resize(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t ab = element_of(actions_[a] * actions_[b]);
      cayley_[a * n + b] = ab;
      if (ab == 0) inverse_[a] = b;
    }
}

std::size_t FiniteGroup::element_of(const Matrix2i& m) const {
  for (std::size_t h = 0; h < actions_.size(); ++h)
    if (actions_[h] == m) return h;
  throw Error("matrix is not an element of group " + to_string(name_));
}

FiniteGroup make_group(GroupName name) { return FiniteGroup(name); }

AffineElement compose_affine(const FiniteGroup& grp, const AffineElement& g1, const AffineElement& g2) {
  const Vec2i hx = grp.act(g1.h, g2.x);
  return {{g1.x[0] + hx[0], g1.x[1] + hx[1]}, grp.product(g1.h, g2.h)};
}

AffineElement invert_affine(const FiniteGroup& grp, const AffineElement& g) {
  const std::size_t hi = grp.inverse(g.h);
  const Vec2i x = grp.act(hi, g.x);
  return {{-x[0], -x[1]}, hi};
}

Vec2i act_affine(const FiniteGroup& grp, const AffineElement& g, const Vec2i& point) {
  const Vec2i p = grp.act(g.h, point);
  return {p[0] + g.x[0], p[1] + g.x[1]};
}

}  // namespace gatt
