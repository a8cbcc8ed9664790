#include "spev/async_layers.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <string>

#include "spev/error.hpp"

namespace spev {

SequenceBatch batch_from_events(const EventStream& events, int width, int height) {
  if (width < 1 || height < 1) throw ValidationError("sequence batch: grid dims must be >= 1");
  SequenceBatch b;
  b.shape = {height, width, 2};
  for (const auto& [site, counts] : aggregate_per_site(events)) {
    if (site.row < 0 || site.row >= height || site.col < 0 || site.col >= width) {
      throw ValidationError("sequence batch: event at x=" + std::to_string(site.col) +
                            " y=" + std::to_string(site.row) + " is outside " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
    b.sites.push_back(site);
    b.deltas.push_back(static_cast<double>(counts.negative));
    b.deltas.push_back(static_cast<double>(counts.positive));
  }
  return b;
}

SequenceBatch batch_from_grid(const SparseGrid& grid) {
  SequenceBatch b;
  b.shape = grid.shape();
  b.sites.assign(grid.sites().begin(), grid.sites().end());
  b.deltas.assign(grid.features().begin(), grid.features().end());
  b.values.assign(grid.features().begin(), grid.features().end());
  return b;
}

std::optional<std::span<const float>> AccumulatedGrid::find(Coord c) const {
  const auto i = index_.find(c);
  if (!i) return std::nullopt;
  const auto ch = static_cast<std::size_t>(shape_.channels);
  return std::span<const float>(features_.data() + static_cast<std::size_t>(*i) * ch, ch);
}

void AccumulatedGrid::add(Coord c, std::span<const double> delta) {
  const auto ch = static_cast<std::size_t>(shape_.channels);
  const auto next = static_cast<int>(sites_.size());
  const auto i = static_cast<std::size_t>(index_.insert(c, next));
  if (i == sites_.size()) {
    sites_.push_back(c);
    features_.resize(features_.size() + ch, 0.0f);
  }
  float* f = features_.data() + i * ch;
  for (std::size_t k = 0; k < ch; ++k) f[k] = static_cast<float>(static_cast<double>(f[k]) + delta[k]);
}

bool AccumulatedGrid::assign(Coord c, std::span<const float> value) {
  const auto ch = static_cast<std::size_t>(shape_.channels);
  const auto next = static_cast<int>(sites_.size());
  const auto i = static_cast<std::size_t>(index_.insert(c, next));
  const bool fresh = i == sites_.size();
  if (fresh) {
    sites_.push_back(c);
    features_.resize(features_.size() + ch);
  }
  std::copy(value.begin(), value.end(), features_.begin() + static_cast<std::ptrdiff_t>(i * ch));
  return fresh;
}

SparseGrid AccumulatedGrid::snapshot() const {
  std::vector<std::size_t> order(sites_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sites_[a] < sites_[b]; });
  const auto ch = static_cast<std::size_t>(shape_.channels);
  std::vector<Coord> sites;
  std::vector<float> features;
  sites.reserve(order.size());
  features.reserve(order.size() * ch);
  for (std::size_t i : order) {
    sites.push_back(sites_[i]);
    features.insert(features.end(), features_.begin() + static_cast<std::ptrdiff_t>(i * ch),
                    features_.begin() + static_cast<std::ptrdiff_t>((i + 1) * ch));
  }
  return SparseGrid(shape_.height, shape_.width, shape_.channels, std::move(sites), std::move(features));
}

namespace {

void check_batch(const SequenceBatch& b, const Shape& expected, const char* layer) {
  if (b.empty()) return;
  if (b.shape != expected) {
    throw ValidationError(std::string(layer) + ": update batch has the wrong grid shape");
  }
  const auto ch = static_cast<std::size_t>(expected.channels);
  if (b.deltas.size() != b.sites.size() * ch || (!b.values.empty() && b.values.size() != b.deltas.size())) {
    throw ValidationError(std::string(layer) + ": update batch feature count does not match its sites");
  }
  for (const Coord& c : b.sites) {
    if (c.row < 0 || c.row >= expected.height || c.col < 0 || c.col >= expected.width) {
      throw ValidationError(std::string(layer) + ": update outside the grid");
    }
  }
}

void fold(AccumulatedGrid& g, const SequenceBatch& b) {
  const auto ch = static_cast<std::size_t>(g.shape().channels);
  for (std::size_t i = 0; i < b.sites.size(); ++i) {
    if (b.values.empty()) {
      g.add(b.sites[i], b.delta(i));
    } else {
      g.assign(b.sites[i], std::span<const float>(b.values).subspan(i * ch, ch));
    }
  }
}

// Stores `value` at `c` and forwards it. Recomputed sites are forwarded even
// when unchanged, so downstream work depends on site sets only.
void publish(AccumulatedGrid& out, Coord c, std::span<const float> value, SequenceBatch& updates) {
  const auto old = out.find(c);
  updates.sites.push_back(c);
  for (std::size_t k = 0; k < value.size(); ++k) {
    const double before = old ? static_cast<double>((*old)[k]) : 0.0;
    updates.deltas.push_back(static_cast<double>(value[k]) - before);
  }
  updates.values.insert(updates.values.end(), value.begin(), value.end());
  out.assign(c, value);
}

void sort_unique(std::vector<Coord>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Output positions whose window (under `rows`/`cols` geometry) covers `s`.
template <typename F>
void for_each_reaching_output(Coord s, int kh, int kw, int stride, const AxisGeometry& rows,
                              const AxisGeometry& cols, F&& f) {
  for (int kr = 0; kr < kh; ++kr) {
    const int num_r = s.row + rows.before - kr;
    if (num_r < 0 || num_r % stride != 0 || num_r / stride >= rows.out_extent) continue;
    for (int kc = 0; kc < kw; ++kc) {
      const int num_c = s.col + cols.before - kc;
      if (num_c < 0 || num_c % stride != 0 || num_c / stride >= cols.out_extent) continue;
      f(Coord{num_r / stride, num_c / stride});
    }
  }
}

}  // namespace

AsyncConv::AsyncConv(const ConvWeights& weights, ConvMode mode, Shape in_shape)
    : weights_(&weights), mode_(mode) {
  weights.validate();
  if (in_shape.channels != weights.in_channels) {
    throw ValidationError("async conv: input has " + std::to_string(in_shape.channels) +
                          " channels, weights expect " + std::to_string(weights.in_channels));
  }
  if (mode == ConvMode::submanifold &&
      (weights.stride != 1 || weights.kernel_h % 2 == 0 || weights.kernel_w % 2 == 0 || !weights.same_padding)) {
    throw ValidationError("async submanifold conv requires stride 1, same padding and odd kernel dims");
  }
  rows_ = window_geometry(in_shape.height, weights.kernel_h, weights.stride, weights.same_padding);
  cols_ = window_geometry(in_shape.width, weights.kernel_w, weights.stride, weights.same_padding);
  input_ = AccumulatedGrid(in_shape);
  output_ = AccumulatedGrid({rows_.out_extent, cols_.out_extent, weights.out_channels});
}

StepResult AsyncConv::step(const SequenceBatch& batch) {
  check_batch(batch, input_.shape(), "async conv");
  StepResult r;
  r.updates.shape = output_.shape();
  if (batch.empty()) return r;
  fold(input_, batch);

  const ConvWeights& w = *weights_;
  std::vector<Coord> affected;
  for (const Coord& s : batch.sites) {
    for_each_reaching_output(s, w.kernel_h, w.kernel_w, w.stride, rows_, cols_, [&](Coord o) {
      // Submanifold outputs exist only where the input is active.
      if (mode_ == ConvMode::full || input_.find(o)) affected.push_back(o);
    });
  }
  sort_unique(affected);

  const auto oc = static_cast<std::size_t>(w.out_channels);
  std::vector<double> acc(oc);
  std::vector<float> value(oc);
  std::uint64_t pairs = 0;
  for (const Coord& o : affected) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int kr = 0; kr < w.kernel_h; ++kr) {
      const int r = o.row * w.stride - rows_.before + kr;
      if (r < 0 || r >= input_.shape().height) continue;
      for (int kc = 0; kc < w.kernel_w; ++kc) {
        const int c = o.col * w.stride - cols_.before + kc;
        if (c < 0 || c >= input_.shape().width) continue;
        if (auto x = input_.find({r, c})) {
          detail::accumulate_tap(acc, *x, w, kr, kc);
          ++pairs;
        }
      }
    }
    detail::finish_conv(acc, w, value);
    publish(output_, o, value, r.updates);
  }
  r.processed_sites = affected.size();
  r.ops.sites_processed = affected.size();
  r.ops.rulebook_pairs = pairs;
  r.ops.multiply_accumulates = pairs * static_cast<std::uint64_t>(w.in_channels) * w.out_channels;
  return r;
}

AsyncAffine::AsyncAffine(const NormStats& stats, Shape shape)
    : stats_(&stats), input_(shape), output_(shape) {
  stats.validate();
  if (stats.channels() != shape.channels) {
    throw ValidationError("async batchnorm: input has " + std::to_string(shape.channels) +
                          " channels, stats have " + std::to_string(stats.channels()));
  }
}

AsyncAffine::AsyncAffine(float leaky_alpha, Shape shape) : alpha_(leaky_alpha), input_(shape), output_(shape) {}

float AsyncAffine::transform(int ch, float x) const {
  return stats_ ? stats_->apply(ch, x) : leaky_relu(x, alpha_);
}

StepResult AsyncAffine::step(const SequenceBatch& batch) {
  check_batch(batch, input_.shape(), stats_ ? "async batchnorm" : "async leaky_relu");
  StepResult r;
  r.updates.shape = output_.shape();
  if (batch.empty()) return r;
  fold(input_, batch);
  const int ch = input_.shape().channels;
  std::vector<float> value(static_cast<std::size_t>(ch));
  for (const Coord& s : batch.sites) {
    const auto x = *input_.find(s);
    for (int k = 0; k < ch; ++k) value[static_cast<std::size_t>(k)] = transform(k, x[static_cast<std::size_t>(k)]);
    publish(output_, s, value, r.updates);
  }
  r.processed_sites = batch.sites.size();
  r.ops = elementwise_op_count(batch.sites.size(), ch);
  return r;
}

AsyncMaxPool::AsyncMaxPool(int window, int stride, Shape in_shape) : window_(window), stride_(stride) {
  if (window < 1 || stride < 1) throw ValidationError("async maxpool: window and stride must be >= 1");
  rows_ = same_padding(in_shape.height, window, stride);
  cols_ = same_padding(in_shape.width, window, stride);
  input_ = AccumulatedGrid(in_shape);
  output_ = AccumulatedGrid({rows_.out_extent, cols_.out_extent, in_shape.channels});
}

StepResult AsyncMaxPool::step(const SequenceBatch& batch) {
  check_batch(batch, input_.shape(), "async maxpool");
  StepResult r;
  r.updates.shape = output_.shape();
  if (batch.empty()) return r;
  fold(input_, batch);

  std::vector<Coord> affected;
  for (const Coord& s : batch.sites) {
    for_each_reaching_output(s, window_, window_, stride_, rows_, cols_, [&](Coord o) { affected.push_back(o); });
  }
  sort_unique(affected);

  const auto ch = static_cast<std::size_t>(input_.shape().channels);
  std::vector<float> value(ch);
  for (const Coord& o : affected) {
    std::fill(value.begin(), value.end(), -std::numeric_limits<float>::infinity());
    // Row-major window order matches the synchronous pass over sorted sites.
    for (int kr = 0; kr < window_; ++kr) {
      const int row = o.row * stride_ - rows_.before + kr;
      if (row < 0 || row >= input_.shape().height) continue;
      for (int kc = 0; kc < window_; ++kc) {
        const int col = o.col * stride_ - cols_.before + kc;
        if (col < 0 || col >= input_.shape().width) continue;
        if (auto x = input_.find({row, col})) {
          for (std::size_t c = 0; c < ch; ++c) value[c] = std::max(value[c], (*x)[c]);
        }
      }
    }
    publish(output_, o, value, r.updates);
  }
  r.processed_sites = affected.size();
  r.ops = elementwise_op_count(affected.size(), static_cast<int>(ch));
  return r;
}

AsyncNetwork::AsyncNetwork(const Pipeline& p, const WeightStore& ws) : pipeline_(&p), weights_(&ws) {
  if (p.backend != Backend::async) throw ValidationError("AsyncNetwork needs an async pipeline");
  if (p.stages.empty() || p.stages.front().op != OpKind::input) {
    throw ValidationError("async pipeline must start with an input stage");
  }
  check_compatible(ws, p.spec);
  input_ = AccumulatedGrid(p.spec.input);
  std::size_t i = 1;
  for (; i < p.stages.size() && p.stages[i].sparse; ++i) {
    const Stage& s = p.stages[i];
    switch (s.op) {
      case OpKind::submanifold_conv:
      case OpKind::sparse_conv:
        layers_.emplace_back(std::in_place_type<AsyncConv>, ws.conv(static_cast<std::size_t>(s.block)),
                             s.op == OpKind::submanifold_conv ? ConvMode::submanifold : ConvMode::full, s.io.in);
        break;
      case OpKind::batchnorm:
        layers_.emplace_back(std::in_place_type<AsyncAffine>, ws.norm(static_cast<std::size_t>(s.block)), s.io.in);
        break;
      case OpKind::leaky_relu:
        layers_.emplace_back(std::in_place_type<AsyncAffine>, s.alpha, s.io.in);
        break;
      case OpKind::maxpool:
        layers_.emplace_back(std::in_place_type<AsyncMaxPool>, s.kernel, s.stride, s.io.in);
        break;
      default:
        throw ValidationError("stage " + std::to_string(i) + " has no asynchronous implementation");
    }
  }
  first_dense_stage_ = i;
}

std::vector<std::size_t> AsyncNetwork::step(const SequenceBatch& input, StageObserver* observer) {
  const Pipeline& p = *pipeline_;
  std::vector<std::size_t> processed(p.stages.size(), 0);
  if (input.shape != p.spec.input && !input.empty()) {
    throw ValidationError("async input batch does not match the network input shape");
  }
  check_batch(input, p.spec.input, "async input");
  fold(input_, input);
  processed[0] = input.sites.size();
  if (observer) {
    OpCount ops;
    ops.sites_processed = input.sites.size();
    observer->on_stage(0, 0.0, ops);
  }
  SequenceBatch current = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto t0 = std::chrono::steady_clock::now();
    StepResult r = std::visit([&](auto& layer) { return layer.step(current); }, layers_[l]);
    const auto t1 = std::chrono::steady_clock::now();
    processed[l + 1] = r.processed_sites;
    if (observer) observer->on_stage(l + 1, std::chrono::duration<double>(t1 - t0).count(), r.ops);
    current = std::move(r.updates);
  }
  return processed;
}

SparseGrid AsyncNetwork::sparse_output() const {
  if (layers_.empty()) return input_.snapshot();
  return std::visit([](const auto& layer) { return layer.output().snapshot(); }, layers_.back());
}

std::vector<float> AsyncNetwork::finish(StageObserver* observer, std::vector<std::size_t>* processed) const {
  return detail::run_tail(*pipeline_, *weights_, sparse_output(), first_dense_stage_, observer, processed);
}

AsyncRunResult async_run(const Pipeline& p, const WeightStore& ws, std::span<const EventStream> sequences,
                         StageObserver* observer) {
  AsyncNetwork net(p, ws);
  AsyncRunResult result;
  for (const EventStream& s : sequences) {
    if (s.width() != p.spec.input.width || s.height() != p.spec.input.height) {
      throw ValidationError("event sequence is " + std::to_string(s.width()) + "x" + std::to_string(s.height()) +
                            ", network input is " + std::to_string(p.spec.input.width) + "x" +
                            std::to_string(p.spec.input.height));
    }
    result.processed.push_back(net.step(batch_from_events(s, s.width(), s.height()), observer));
  }
  if (result.processed.empty()) result.processed.emplace_back(p.stages.size(), 0);
  result.raw = net.finish(observer, &result.processed.back());
  return result;
}

}  // namespace spev
