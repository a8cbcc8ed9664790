#pragma once

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "spev/dense_layers.hpp"
#include "spev/tensor.hpp"

namespace spev {

enum class ConvMode { submanifold, full };

struct RulePair {
  int in = 0;
  int out = 0;

  friend constexpr bool operator==(const RulePair&, const RulePair&) = default;
};

// Hash lookup from coordinate to site index.
class SiteIndex {
 public:
  SiteIndex() = default;
  explicit SiteIndex(std::span<const Coord> sites);

  std::optional<int> find(Coord c) const {
    auto it = index_.find(coord_key(c));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  // Returns the index of `c`, assigning `next` if it is new.
  int insert(Coord c, int next) { return index_.try_emplace(coord_key(c), next).first->second; }
  std::size_t size() const { return index_.size(); }

 private:
  std::unordered_map<std::uint64_t, int> index_;
};

// Input-to-output site pairing per kernel offset. Offsets are numbered
// kr * kernel_w + kc; each group is sorted by output index.
struct Rulebook {
  ConvMode mode = ConvMode::submanifold;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  bool same_padding = true;
  int in_height = 0;
  int in_width = 0;
  int out_height = 0;
  int out_width = 0;
  std::vector<Coord> input_sites;
  std::vector<Coord> output_sites;
  std::vector<std::vector<RulePair>> pairs;

  std::size_t pair_count() const;
  // True if this rulebook applies to `sites` on an in_height x in_width grid
  // for a kernel of the given shape. Consecutive submanifold layers with equal
  // kernels reuse one rulebook through this check.
  bool matches(std::span<const Coord> sites, int height, int width) const;
};

// Throws ValidationError for submanifold mode with stride != 1 or an even
// kernel dimension.
Rulebook build_rulebook(std::span<const Coord> in_sites, int height, int width, int kernel_h,
                        int kernel_w, int stride, ConvMode mode, bool same_padding = true);

// Non-valid sparse convolution: outputs at every site the kernel reaches.
SparseGrid sparse_conv(const SparseGrid& in, const ConvWeights& w, const Rulebook& rb);
// Outputs only at the input's active sites.
SparseGrid submanifold_conv(const SparseGrid& in, const ConvWeights& w, const Rulebook& rb);

SparseGrid sparse_batchnorm_infer(const SparseGrid& in, const NormStats& s);
SparseGrid sparse_leaky_relu(const SparseGrid& in, float alpha = kDefaultLeakySlope);
// Active-only max: inactive positions never participate.
SparseGrid sparse_maxpool(const SparseGrid& in, int window, int stride);

}  // namespace spev
