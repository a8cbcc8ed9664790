#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spev/network.hpp"
#include "spev/op_count.hpp"
#include "spev/tensor.hpp"
#include "spev/weights.hpp"

namespace spev {

enum class Backend { dense, sparse, async };

std::string_view to_string(Backend b);
// Throws ValidationError for an unknown name.
Backend parse_backend(std::string_view name);

// Executable operation of a lowered pipeline.
enum class OpKind {
  input,  // sparsify / event aggregation, sparse and async backends only
  conv,
  submanifold_conv,
  sparse_conv,
  batchnorm,
  maxpool,
  leaky_relu,
  sparse_to_dense,
  flatten,
  linear,
};

struct Stage {
  OpKind op = OpKind::conv;
  // Runs on sparse grids (sparse and async backends, before sparse_to_dense).
  bool sparse = false;
  int layer = -1;  // spec layer index, -1 for the input stage
  int block = -1;  // weight block, -1 if parameter-free
  LayerIO io;
  int kernel = 1;
  int stride = 1;
  float alpha = kDefaultLeakySlope;
};

// Reporting name, e.g. "conv", "sparse_batchnorm", "async_submanifold_conv".
std::string stage_kind_name(Backend backend, const Stage& s);

struct LowerOptions {
  // Lower stride-1 convs to non-valid sparse convs instead of submanifold.
  bool full_mode_convs = false;
};

struct Pipeline {
  Backend backend = Backend::dense;
  NetworkSpec spec;
  std::vector<Stage> stages;
};

// Dense: every layer maps to its dense kernel. Sparse/async: stride-1 conv ->
// submanifold, strided conv -> non-valid sparse conv, pooling and
// normalization -> sparse variants; everything after sparse_to_dense is dense.
// Throws ValidationError naming the first layer that breaks the shape chain.
Pipeline lower(const NetworkSpec& spec, Backend backend, LowerOptions options = {});

// Receives exclusive per-stage timings and op counts.
class StageObserver {
 public:
  virtual ~StageObserver() = default;
  virtual void on_stage(std::size_t stage_index, double seconds, const OpCount& ops) = 0;
};

// Raw head output for one input grid (histogram or image). The async backend
// treats the whole input as a single sequence.
std::vector<float> forward(const Pipeline& p, const WeightStore& ws, const DenseGrid& input,
                           StageObserver* observer = nullptr);

// Layer-major execution over a batch: each stage runs on every sample before
// the next stage starts.
std::vector<std::vector<float>> forward_batch(const Pipeline& p, const WeightStore& ws,
                                              std::span<const DenseGrid> inputs,
                                              StageObserver* observer = nullptr);

// Per-stage sparse activity of a synchronous sparse run, used as the N_sync
// baseline for the asynchronous op-count bound.
std::vector<std::uint64_t> sync_sites_processed(const Pipeline& sparse, const WeightStore& ws,
                                                const DenseGrid& input);

namespace detail {

// Runs stages [first, end) starting from a sparse grid, where `first` is the
// sparse_to_dense stage. Adds each stage's sites to `processed` if given.
std::vector<float> run_tail(const Pipeline& p, const WeightStore& ws, const SparseGrid& x, std::size_t first,
                            StageObserver* observer, std::vector<std::size_t>* processed);

}  // namespace detail

}  // namespace spev
