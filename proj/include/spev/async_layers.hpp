#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "spev/dense_layers.hpp"
#include "spev/events.hpp"
#include "spev/op_count.hpp"
#include "spev/pipeline.hpp"
#include "spev/sparse_layers.hpp"
#include "spev/tensor.hpp"
#include "spev/weights.hpp"

namespace spev {

// Feature increments for one time slice. Sites are sorted and unique; a site
// with an all-zero delta is still reported when it has just become active.
struct SequenceBatch {
  Shape shape;
  std::vector<Coord> sites;
  std::vector<double> deltas;  // sites.size() * channels
  // Optional new absolute features (same layout). Downstream layers assign
  // these instead of adding deltas, which keeps float state bit-exact.
  std::vector<float> values;

  std::span<const double> delta(std::size_t i) const {
    return {deltas.data() + i * static_cast<std::size_t>(shape.channels),
            static_cast<std::size_t>(shape.channels)};
  }
  bool empty() const { return sites.empty(); }
};

// Two-channel histogram increment of one event slice; duplicate events at a
// site collapse into a single update.
SequenceBatch batch_from_events(const EventStream& events, int width, int height);
// Treats every active site of `grid` as an update with its features as delta.
SequenceBatch batch_from_grid(const SparseGrid& grid);

// Growing sparse grid with hash lookup. Sites are never removed.
class AccumulatedGrid {
 public:
  AccumulatedGrid() = default;
  explicit AccumulatedGrid(Shape shape) : shape_(shape) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return sites_.size(); }

  std::optional<std::span<const float>> find(Coord c) const;
  // Adds `delta` at `c`, activating the site if needed.
  void add(Coord c, std::span<const double> delta);
  // Overwrites the features at `c`; returns true if the site was new.
  bool assign(Coord c, std::span<const float> value);

  // Canonical sorted snapshot.
  SparseGrid snapshot() const;

 private:
  Shape shape_;
  SiteIndex index_;
  std::vector<Coord> sites_;
  std::vector<float> features_;
};

struct StepResult {
  SequenceBatch updates;
  std::size_t processed_sites = 0;
  OpCount ops;
};

// Asynchronous sparse convolution. Every step folds the batch into the
// accumulated input, then recomputes from scratch each output site whose
// kernel window covers an updated input site. Submanifold mode only touches
// already-active sites; full mode may activate new output sites.
// The weights must outlive the layer.
class AsyncConv {
 public:
  AsyncConv(const ConvWeights& weights, ConvMode mode, Shape in_shape);

  StepResult step(const SequenceBatch& batch);

  const AccumulatedGrid& input() const { return input_; }
  const AccumulatedGrid& output() const { return output_; }
  ConvMode mode() const { return mode_; }

 private:
  const ConvWeights* weights_;
  ConvMode mode_;
  AxisGeometry rows_;
  AxisGeometry cols_;
  AccumulatedGrid input_;
  AccumulatedGrid output_;
};

// Per-site transform (batchnorm or leaky ReLU) recomputed from the
// accumulated input at updated sites, so sign flips across sequences land on
// the correct branch.
class AsyncAffine {
 public:
  AsyncAffine(const NormStats& stats, Shape shape);
  AsyncAffine(float leaky_alpha, Shape shape);

  StepResult step(const SequenceBatch& batch);

  const AccumulatedGrid& input() const { return input_; }
  const AccumulatedGrid& output() const { return output_; }

 private:
  float transform(int ch, float x) const;

  const NormStats* stats_ = nullptr;
  float alpha_ = kDefaultLeakySlope;
  AccumulatedGrid input_;
  AccumulatedGrid output_;
};

// Active-only max pooling; recomputes every pooled window that contains an
// updated site.
class AsyncMaxPool {
 public:
  AsyncMaxPool(int window, int stride, Shape in_shape);

  StepResult step(const SequenceBatch& batch);

  const AccumulatedGrid& input() const { return input_; }
  const AccumulatedGrid& output() const { return output_; }

 private:
  int window_;
  int stride_;
  AxisGeometry rows_;
  AxisGeometry cols_;
  AccumulatedGrid input_;
  AccumulatedGrid output_;
};

using AsyncLayer = std::variant<AsyncConv, AsyncAffine, AsyncMaxPool>;

// Per-sample state of an async pipeline: one layer state per sparse stage.
class AsyncNetwork {
 public:
  // `p` must be an async pipeline; `p` and `ws` must outlive the network.
  AsyncNetwork(const Pipeline& p, const WeightStore& ws);

  // Feeds one sequence through every sparse stage. Returns the processed-site
  // count per pipeline stage (dense stages report 0).
  std::vector<std::size_t> step(const SequenceBatch& input, StageObserver* observer = nullptr);

  // sparse_to_dense plus the dense tail on the current state; also reports
  // those stages to the observer.
  std::vector<float> finish(StageObserver* observer = nullptr,
                            std::vector<std::size_t>* processed = nullptr) const;

  // Current output of the last sparse stage.
  SparseGrid sparse_output() const;
  const std::vector<AsyncLayer>& layers() const { return layers_; }

 private:
  const Pipeline* pipeline_;
  const WeightStore* weights_;
  std::size_t first_dense_stage_ = 0;
  AccumulatedGrid input_;
  std::vector<AsyncLayer> layers_;  // one per sparse stage after the input stage
};

struct AsyncRunResult {
  std::vector<float> raw;
  // processed[k][s]: sites processed by stage s while handling sequence k.
  // The dense tail runs once, after the last sequence.
  std::vector<std::vector<std::size_t>> processed;
};

// Runs one sample split into consecutive event sequences. Stream dimensions
// must equal the network input.
AsyncRunResult async_run(const Pipeline& p, const WeightStore& ws, std::span<const EventStream> sequences,
                         StageObserver* observer = nullptr);

}  // namespace spev
