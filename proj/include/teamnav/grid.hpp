#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace teamnav {

struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell& a, const Cell& b) { return a.x == b.x && a.y == b.y; }
  friend bool operator!=(const Cell& a, const Cell& b) { return !(a == b); }
  // Raster order (y, then x) so sets and loops scan rows top-down.
  friend bool operator<(const Cell& a, const Cell& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

inline std::string to_string(const Cell& c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
}

inline int manhattan(const Cell& a, const Cell& b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y);
}

inline int chebyshev(const Cell& a, const Cell& b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

// 4-neighborhood in N,E,S,W order. Several tie-break rules depend on this order.
inline const std::vector<Cell>& nesw() {
  static const std::vector<Cell> d = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  return d;
}

// 8-neighborhood, raster order.
inline const std::vector<Cell>& neighbors8() {
  static const std::vector<Cell> d = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                      {1, 0},   {-1, 1}, {0, 1}, {1, 1}};
  return d;
}

template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(const Cell& c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }
  T& at(const Cell& c) { return data_[index(c)]; }
  const T& at(const Cell& c) const { return data_[index(c)]; }
  T& at(int x, int y) { return at(Cell{x, y}); }
  const T& at(int x, int y) const { return at(Cell{x, y}); }
  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid2D& a, const Grid2D& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  size_t index(const Cell& c) const {
    if (!in_bounds(c)) throw std::out_of_range("cell " + to_string(c) + " out of grid bounds");
    return static_cast<size_t>(c.y) * width_ + c.x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Agents face one of 12 discrete headings, 30 degrees apart, counterclockwise
// on screen (y grows downward). Heading 0 looks along +x; 3 along -y; 6 along
// -x; 9 along +y. Only those four axis headings admit a forward move.
inline constexpr int kHeadingCount = 12;

inline bool heading_is_axis(int h) { return h % 3 == 0; }

inline Cell heading_axis_dir(int h) {
  switch (h % kHeadingCount) {
    case 0: return {1, 0};
    case 3: return {0, -1};
    case 6: return {-1, 0};
    case 9: return {0, 1};
    default: throw std::invalid_argument("heading " + std::to_string(h) + " is not axis-aligned");
  }
}

inline double heading_angle_rad(int h) { return h * (M_PI / 6.0); }

inline int heading_wrap(int h) { return ((h % kHeadingCount) + kHeadingCount) % kHeadingCount; }

// Smallest absolute angular difference between two angles, in radians.
inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2.0 * M_PI);
  if (d < -M_PI) d += 2.0 * M_PI;
  if (d > M_PI) d -= 2.0 * M_PI;
  return std::abs(d);
}

// FNV-1a, used for payload digests and trace checksum chaining.
inline uint64_t fnv1a(const std::string& s, uint64_t seed = 14695981039346656037ull) {
  uint64_t h = seed;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace teamnav
