#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "galformer/errors.hpp"
#include "galformer/molio/types.hpp"

namespace galformer::molio {

inline constexpr double kMinArmLength = 1e-9;

inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

/// Euclidean distance between atoms u and v (Angstrom).
inline double pair_distance(std::span<const Vec3> coords, std::size_t u, std::size_t v) {
  if (u >= coords.size() || v >= coords.size()) throw IndexOutOfRange("atom index out of range");
  const double d = norm3(sub(coords[u], coords[v]));
  if (!(d >= kMinArmLength)) {
    throw DegenerateGeometry("atoms " + std::to_string(u) + " and " + std::to_string(v) + " coincide");
  }
  return d;
}

/// Angle at v between arms v->u and v->w, in [0, pi]. atan2 keeps it accurate
/// near 0 and pi where acos loses precision.
inline double bond_angle(std::span<const Vec3> coords, std::size_t u, std::size_t v, std::size_t w) {
  if (u >= coords.size() || v >= coords.size() || w >= coords.size())
    throw IndexOutOfRange("atom index out of range");
  const Vec3 a = sub(coords[u], coords[v]);
  const Vec3 b = sub(coords[w], coords[v]);
  if (!(norm3(a) >= kMinArmLength) || !(norm3(b) >= kMinArmLength)) {
    throw DegenerateGeometry("zero-length arm in angle " + std::to_string(u) + "-" + std::to_string(v) +
                             "-" + std::to_string(w));
  }
  return std::atan2(norm3(cross3(a, b)), dot3(a, b));
}

}  // namespace galformer::molio
