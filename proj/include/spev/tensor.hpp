#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace spev {

// Pixel coordinate, origin top-left. Ordering is lexicographic by (row, col),
// which is the canonical site order of every SparseGrid.
struct Coord {
  int row = 0;
  int col = 0;

  friend constexpr auto operator<=>(const Coord&, const Coord&) = default;
};

inline std::uint64_t coord_key(Coord c) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.row)) << 32) |
         static_cast<std::uint32_t>(c.col);
}

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
};

// Channel-last (row, col, channel) grid of 32-bit reals.
class DenseGrid {
 public:
  DenseGrid() = default;
  DenseGrid(int height, int width, int channels);
  DenseGrid(int height, int width, int channels, std::vector<float> values);

  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  const Shape& shape() const { return shape_; }

  float& at(int row, int col, int ch) { return values_[offset(row, col, ch)]; }
  float at(int row, int col, int ch) const { return values_[offset(row, col, ch)]; }

  std::span<float> pixel(int row, int col) {
    return {values_.data() + offset(row, col, 0), static_cast<std::size_t>(shape_.channels)};
  }
  std::span<const float> pixel(int row, int col) const {
    return {values_.data() + offset(row, col, 0), static_cast<std::size_t>(shape_.channels)};
  }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  friend bool operator==(const DenseGrid&, const DenseGrid&) = default;

 private:
  std::size_t offset(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * shape_.width + col) * shape_.channels + ch;
  }

  Shape shape_;
  std::vector<float> values_;
};

// Active-site set plus one feature vector per site. Sites are kept sorted and
// unique; a site stays active even if its features are all zero.
class SparseGrid {
 public:
  SparseGrid() = default;
  SparseGrid(int height, int width, int channels);
  // Sites must already be sorted, unique and in bounds.
  SparseGrid(int height, int width, int channels, std::vector<Coord> sites,
             std::vector<float> features);

  // Accepts sites in any order; rejects duplicates.
  static SparseGrid from_unordered(int height, int width, int channels, std::vector<Coord> sites,
                                   std::vector<float> features);

  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  const Shape& shape() const { return shape_; }

  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }

  std::span<const Coord> sites() const { return sites_; }
  std::span<const float> features() const { return features_; }
  std::span<float> features() { return features_; }

  std::span<const float> feature(std::size_t i) const {
    return {features_.data() + i * shape_.channels, static_cast<std::size_t>(shape_.channels)};
  }
  std::span<float> feature(std::size_t i) {
    return {features_.data() + i * shape_.channels, static_cast<std::size_t>(shape_.channels)};
  }

  // Index of the site at `c`, binary search over the canonical order.
  std::optional<std::size_t> find(Coord c) const;

  friend bool operator==(const SparseGrid&, const SparseGrid&) = default;

 private:
  Shape shape_;
  std::vector<Coord> sites_;
  std::vector<float> features_;
};

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  friend constexpr bool operator==(const Padding&, const Padding&) = default;
};

// Per-axis geometry of a windowed op.
struct AxisGeometry {
  int before = 0;
  int after = 0;
  int out_extent = 0;

  friend constexpr bool operator==(const AxisGeometry&, const AxisGeometry&) = default;
};

// 'same' padding: out = ceil(in / stride); the odd remainder of the total pad
// goes to the after side (bottom/right).
AxisGeometry same_padding(int in_extent, int kernel, int stride);

// No padding: out = floor((in - kernel) / stride) + 1. Throws ValidationError
// when the kernel does not fit.
AxisGeometry valid_geometry(int in_extent, int kernel, int stride);

inline AxisGeometry window_geometry(int in_extent, int kernel, int stride, bool same) {
  return same ? same_padding(in_extent, kernel, stride) : valid_geometry(in_extent, kernel, stride);
}

DenseGrid densify(const SparseGrid& g);
SparseGrid sparsify(const DenseGrid& g);

}  // namespace spev
