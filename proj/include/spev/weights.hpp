#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "spev/dense_layers.hpp"
#include "spev/network.hpp"

namespace spev {

using WeightBlock = std::variant<ConvWeights, NormStats, LinearWeights>;

// Parameters shared by the dense, sparse and async lowerings of one spec:
// one block per conv, batchnorm and linear layer, in layer order.
struct WeightStore {
  std::vector<WeightBlock> blocks;

  const ConvWeights& conv(std::size_t block) const { return std::get<ConvWeights>(blocks.at(block)); }
  const NormStats& norm(std::size_t block) const { return std::get<NormStats>(blocks.at(block)); }
  const LinearWeights& dense(std::size_t block) const {
    return std::get<LinearWeights>(blocks.at(block));
  }
};

// Block index for every layer of `spec`, -1 for parameter-free layers.
std::vector<int> block_indices(const NetworkSpec& spec);

// Zero-initialised store with the exact block shapes `spec` requires.
WeightStore zero_weights(const NetworkSpec& spec);

// Throws ValidationError naming the first block whose kind or shape differs.
void check_compatible(const WeightStore& ws, const NetworkSpec& spec);

struct RandomWeightOptions {
  // Conv biases zero and batchnorm shift chosen so that 0 maps to 0. Under
  // these weights every sparse layer's inactive sites agree with the dense
  // layer on the densified grid.
  bool zero_preserving = false;
};

// Deterministic for a given seed on every platform. Kernels are uniform in
// +/- 1/sqrt(fan_in).
WeightStore random_weights(const NetworkSpec& spec, std::uint64_t seed,
                           RandomWeightOptions options = {});

// Little-endian binary: "SPEV", u16 version, u32 block count, then per block
// u8 kind, u8 rank, u32 dims[rank] and float32 payload.
std::vector<std::uint8_t> save_weights(const WeightStore& ws, const NetworkSpec& spec);
// Throws FormatError on bad magic/version, truncation or a block that does
// not fit `spec` (the message names the block).
WeightStore load_weights(std::span<const std::uint8_t> bytes, const NetworkSpec& spec);

inline constexpr std::uint16_t kWeightFormatVersion = 1;

}  // namespace spev
