#pragma once

#include <cmath>

namespace warpcore {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Integer image extent.
struct Dims {
  int width = 0;
  int height = 0;

  friend constexpr bool operator==(Dims a, Dims b) = default;
};

/// Half-away-from-zero rounding used for every window anchor.
inline int round_half_away(double v) { return static_cast<int>(std::round(v)); }

}  // namespace warpcore
