#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spev/network.hpp"
#include "spev/weights.hpp"

namespace spev {

// True if dense and full-mode sparse execution agree on the whole network
// under zero-preserving weights: every sparse-section maxpool must see a
// non-negative input (a leaky_relu with alpha 0, possibly through further
// such maxpools), because active-only pooling ignores the zeros a dense
// pool would see.
bool pool_safe(const NetworkSpec& spec);

struct EquivalenceReport {
  int trials = 0;
  double tolerance = 1e-5;
  // async vs sparse raw output, over both conv lowerings and all partitions.
  double async_vs_sparse = 0;
  // Worst per-layer deviation of the sparse pipeline from its dense oracle.
  double layer_vs_dense = 0;
  // Whole-network dense vs full-mode sparse; only run when pool_safe.
  std::optional<double> dense_vs_sparse;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

// Randomized cross-backend check on 5%-dense random event samples with 1..5
// sequence partitions. Per-layer checks use random weights with biases;
// the whole-network dense comparison uses zero-preserving weights.
EquivalenceReport check_equivalence(const NetworkSpec& spec, std::uint64_t seed, int trials,
                                    double tolerance = 1e-5);

}  // namespace spev
