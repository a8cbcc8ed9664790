#include "spev/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "spev/error.hpp"

namespace spev {

namespace {

void check_dims(int height, int width, int channels) {
  if (height < 1 || width < 1 || channels < 1) {
    throw ValidationError("grid dimensions must be >= 1, got " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
  }
}

}  // namespace

DenseGrid::DenseGrid(int height, int width, int channels)
    : shape_{height, width, channels} {
  check_dims(height, width, channels);
  values_.assign(shape_.size(), 0.0f);
}

DenseGrid::DenseGrid(int height, int width, int channels, std::vector<float> values)
    : shape_{height, width, channels}, values_(std::move(values)) {
  check_dims(height, width, channels);
  if (values_.size() != shape_.size()) {
    throw ValidationError("dense grid expects " + std::to_string(shape_.size()) +
                          " values, got " + std::to_string(values_.size()));
  }
}

SparseGrid::SparseGrid(int height, int width, int channels) : shape_{height, width, channels} {
  check_dims(height, width, channels);
}

SparseGrid::SparseGrid(int height, int width, int channels, std::vector<Coord> sites,
                       std::vector<float> features)
    : shape_{height, width, channels}, sites_(std::move(sites)), features_(std::move(features)) {
  check_dims(height, width, channels);
  if (features_.size() != sites_.size() * static_cast<std::size_t>(channels)) {
    throw ValidationError("sparse grid feature count does not match sites x channels");
  }
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const Coord c = sites_[i];
    if (c.row < 0 || c.row >= height || c.col < 0 || c.col >= width) {
      throw ValidationError("sparse site (" + std::to_string(c.row) + "," +
                            std::to_string(c.col) + ") out of bounds");
    }
    if (i > 0 && !(sites_[i - 1] < c)) {
      throw ValidationError("sparse sites must be sorted and unique");
    }
  }
}

SparseGrid SparseGrid::from_unordered(int height, int width, int channels, std::vector<Coord> sites,
                                      std::vector<float> features) {
  if (features.size() != sites.size() * static_cast<std::size_t>(channels)) {
    throw ValidationError("sparse grid feature count does not match sites x channels");
  }
  std::vector<std::size_t> order(sites.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sites[a] < sites[b]; });
  std::vector<Coord> sorted_sites;
  std::vector<float> sorted_features;
  sorted_sites.reserve(sites.size());
  sorted_features.reserve(features.size());
  for (std::size_t idx : order) {
    sorted_sites.push_back(sites[idx]);
    auto first = features.begin() + static_cast<std::ptrdiff_t>(idx * channels);
    sorted_features.insert(sorted_features.end(), first, first + channels);
  }
  return SparseGrid(height, width, channels, std::move(sorted_sites), std::move(sorted_features));
}

std::optional<std::size_t> SparseGrid::find(Coord c) const {
  auto it = std::lower_bound(sites_.begin(), sites_.end(), c);
  if (it == sites_.end() || *it != c) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - sites_.begin());
}

AxisGeometry same_padding(int in_extent, int kernel, int stride) {
  if (in_extent < 1 || kernel < 1 || stride < 1) {
    throw ValidationError("same_padding requires extent, kernel and stride >= 1");
  }
  const int out = (in_extent + stride - 1) / stride;
  const int total = std::max(0, (out - 1) * stride + kernel - in_extent);
  return {total / 2, total - total / 2, out};
}

AxisGeometry valid_geometry(int in_extent, int kernel, int stride) {
  if (in_extent < 1 || kernel < 1 || stride < 1) {
    throw ValidationError("valid geometry requires extent, kernel and stride >= 1");
  }
  if (kernel > in_extent) {
    throw ValidationError("kernel " + std::to_string(kernel) + " larger than extent " +
                          std::to_string(in_extent) + " without padding");
  }
  return {0, 0, (in_extent - kernel) / stride + 1};
}

DenseGrid densify(const SparseGrid& g) {
  DenseGrid out(g.height(), g.width(), g.channels());
  const auto sites = g.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    std::ranges::copy(g.feature(i), out.pixel(sites[i].row, sites[i].col).begin());
  }
  return out;
}

SparseGrid sparsify(const DenseGrid& g) {
  std::vector<Coord> sites;
  std::vector<float> features;
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      const auto px = g.pixel(r, c);
      if (std::ranges::any_of(px, [](float v) { return v != 0.0f; })) {
        sites.push_back({r, c});
        features.insert(features.end(), px.begin(), px.end());
      }
    }
  }
  return SparseGrid(g.height(), g.width(), g.channels(), std::move(sites), std::move(features));
}

}  // namespace spev
