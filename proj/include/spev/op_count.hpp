#pragma once

#include <cstdint>

#include "spev/sparse_layers.hpp"
#include "spev/tensor.hpp"

namespace spev {

// Deterministic work counters. Additive across layers and samples.
struct OpCount {
  std::uint64_t multiply_accumulates = 0;
  std::uint64_t sites_processed = 0;
  std::uint64_t rulebook_pairs = 0;

  OpCount& operator+=(const OpCount& o) {
    multiply_accumulates += o.multiply_accumulates;
    sites_processed += o.sites_processed;
    rulebook_pairs += o.rulebook_pairs;
    return *this;
  }
  friend OpCount operator+(OpCount a, const OpCount& b) { return a += b; }
  friend constexpr bool operator==(const OpCount&, const OpCount&) = default;
};

// Dense convolution visits every output position with the full kernel:
// H_out * W_out * kh * kw * C_in * C_out MACs (padding taps included).
OpCount dense_conv_op_count(const Shape& in, const ConvWeights& w);

// Sparse convolution (either mode): one C_in x C_out product per rulebook
// pair. Bias additions are not MACs and are not counted.
OpCount sparse_conv_op_count(const Rulebook& rb, int in_channels, int out_channels);

// Normalization, activation and pooling: sites x channels.
OpCount elementwise_op_count(std::uint64_t sites, int channels);

OpCount linear_op_count(int in_features, int out_features);

}  // namespace spev
