#include "spev/pipeline.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <variant>

#include "spev/async_layers.hpp"
#include "spev/dense_layers.hpp"
#include "spev/error.hpp"
#include "spev/sparse_layers.hpp"

namespace spev {

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::dense: return "dense";
    case Backend::sparse: return "sparse";
    case Backend::async: return "async";
  }
  return "?";
}

Backend parse_backend(std::string_view name) {
  if (name == "dense") return Backend::dense;
  if (name == "sparse") return Backend::sparse;
  if (name == "async") return Backend::async;
  throw ValidationError("unknown backend '" + std::string(name) + "' (expected dense, sparse or async)");
}

std::string stage_kind_name(Backend backend, const Stage& s) {
  std::string base;
  switch (s.op) {
    case OpKind::input: base = "input"; break;
    case OpKind::conv: base = "conv"; break;
    case OpKind::submanifold_conv: base = "submanifold_conv"; break;
    case OpKind::sparse_conv: base = "sparse_conv"; break;
    case OpKind::batchnorm: base = "batchnorm"; break;
    case OpKind::maxpool: base = "maxpool"; break;
    case OpKind::leaky_relu: base = "leaky_relu"; break;
    case OpKind::sparse_to_dense: return "sparse_to_dense";
    case OpKind::flatten: base = "flatten"; break;
    case OpKind::linear: base = "linear"; break;
  }
  if (!s.sparse) return base;
  if (backend == Backend::async) return "async_" + base;
  if (s.op == OpKind::submanifold_conv || s.op == OpKind::sparse_conv) return base;
  return "sparse_" + base;
}

Pipeline lower(const NetworkSpec& spec, Backend backend, LowerOptions options) {
  const auto io = validate(spec);
  const auto blocks = block_indices(spec);
  Pipeline p;
  p.backend = backend;
  p.spec = spec;
  const bool sparse_backend = backend != Backend::dense;
  if (sparse_backend) {
    Stage in;
    in.op = OpKind::input;
    in.sparse = true;
    in.io = {spec.input, spec.input, false, false};
    p.stages.push_back(in);
  }
  bool before_dense = true;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    Stage s;
    s.layer = static_cast<int>(i);
    s.block = blocks[i];
    s.io = io[i];
    s.kernel = l.kernel;
    s.stride = l.stride;
    s.alpha = l.alpha;
    s.sparse = sparse_backend && before_dense;
    switch (l.kind) {
      case LayerKind::conv:
        if (!s.sparse) {
          s.op = OpKind::conv;
        } else if (l.stride == 1 && l.kernel % 2 == 1 && !options.full_mode_convs) {
          s.op = OpKind::submanifold_conv;
        } else {
          // Strided and even-kernel convs cannot keep the active set.
          s.op = OpKind::sparse_conv;
        }
        break;
      case LayerKind::batchnorm: s.op = OpKind::batchnorm; break;
      case LayerKind::maxpool: s.op = OpKind::maxpool; break;
      case LayerKind::leaky_relu: s.op = OpKind::leaky_relu; break;
      case LayerKind::sparse_to_dense:
        s.op = OpKind::sparse_to_dense;
        s.sparse = false;
        before_dense = false;
        break;
      case LayerKind::flatten: s.op = OpKind::flatten; break;
      case LayerKind::linear: s.op = OpKind::linear; break;
    }
    p.stages.push_back(s);
  }
  return p;
}

namespace {

using Activation = std::variant<DenseGrid, SparseGrid, std::vector<float>>;
using Clock = std::chrono::steady_clock;

struct SampleState {
  std::optional<Rulebook> rulebook;  // last submanifold rulebook, reused while it matches
};

void check_input(const Pipeline& p, const DenseGrid& input) {
  if (input.shape() != p.spec.input) {
    throw ValidationError("input is " + std::to_string(input.height()) + "x" + std::to_string(input.width()) +
                          "x" + std::to_string(input.channels()) + ", network expects " +
                          std::to_string(p.spec.input.height) + "x" + std::to_string(p.spec.input.width) +
                          "x" + std::to_string(p.spec.input.channels));
  }
}

Activation run_sparse(const Stage& s, const WeightStore& ws, const SparseGrid& x, SampleState& st,
                      OpCount& ops) {
  switch (s.op) {
    case OpKind::submanifold_conv:
    case OpKind::sparse_conv: {
      const ConvWeights& w = ws.conv(static_cast<std::size_t>(s.block));
      const auto mode = s.op == OpKind::submanifold_conv ? ConvMode::submanifold : ConvMode::full;
      if (mode == ConvMode::submanifold) {
        if (!st.rulebook || st.rulebook->kernel_h != w.kernel_h || st.rulebook->kernel_w != w.kernel_w ||
            !st.rulebook->matches(x.sites(), x.height(), x.width())) {
          st.rulebook = build_rulebook(x.sites(), x.height(), x.width(), w.kernel_h, w.kernel_w, 1,
                                       ConvMode::submanifold);
        }
        ops = sparse_conv_op_count(*st.rulebook, w.in_channels, w.out_channels);
        return submanifold_conv(x, w, *st.rulebook);
      }
      const Rulebook rb = build_rulebook(x.sites(), x.height(), x.width(), w.kernel_h, w.kernel_w, w.stride,
                                         ConvMode::full, w.same_padding);
      ops = sparse_conv_op_count(rb, w.in_channels, w.out_channels);
      return sparse_conv(x, w, rb);
    }
    case OpKind::batchnorm:
      ops = elementwise_op_count(x.size(), x.channels());
      return sparse_batchnorm_infer(x, ws.norm(static_cast<std::size_t>(s.block)));
    case OpKind::leaky_relu:
      ops = elementwise_op_count(x.size(), x.channels());
      return sparse_leaky_relu(x, s.alpha);
    case OpKind::maxpool: {
      SparseGrid y = sparse_maxpool(x, s.kernel, s.stride);
      ops = elementwise_op_count(y.size(), y.channels());
      return y;
    }
    default: break;
  }
  throw ValidationError("stage kind is not a sparse operation");
}

Activation run_dense(const Stage& s, const WeightStore& ws, const DenseGrid& x, OpCount& ops) {
  const auto positions = static_cast<std::uint64_t>(s.io.out.height) * static_cast<std::uint64_t>(s.io.out.width);
  switch (s.op) {
    case OpKind::conv: {
      const ConvWeights& w = ws.conv(static_cast<std::size_t>(s.block));
      ops = dense_conv_op_count(x.shape(), w);
      return conv2d(x, w);
    }
    case OpKind::batchnorm:
      ops = elementwise_op_count(positions, x.channels());
      return batchnorm_infer(x, ws.norm(static_cast<std::size_t>(s.block)));
    case OpKind::maxpool:
      ops = elementwise_op_count(positions, x.channels());
      return maxpool2d(x, s.kernel, s.stride);
    case OpKind::leaky_relu:
      ops = elementwise_op_count(positions, x.channels());
      return leaky_relu(x, s.alpha);
    case OpKind::sparse_to_dense:
      ops = {};
      return x;
    case OpKind::flatten: {
      ops = {};
      ops.sites_processed = 1;
      const auto v = x.values();
      return std::vector<float>(v.begin(), v.end());
    }
    default: break;
  }
  throw ValidationError("stage kind cannot run on a dense grid");
}

Activation run_flat(const Stage& s, const WeightStore& ws, const std::vector<float>& x, OpCount& ops) {
  switch (s.op) {
    case OpKind::linear: {
      const LinearWeights& w = ws.dense(static_cast<std::size_t>(s.block));
      ops = linear_op_count(w.in_features, w.out_features);
      return linear(x, w);
    }
    case OpKind::leaky_relu:
      ops = elementwise_op_count(1, static_cast<int>(x.size()));
      return leaky_relu(std::span<const float>(x), s.alpha);
    default: break;
  }
  throw ValidationError("stage kind cannot run on a flat vector");
}

Activation run_stage(const Stage& s, const WeightStore& ws, Activation x, SampleState& st, OpCount& ops) {
  if (s.op == OpKind::input) {
    const auto& d = std::get<DenseGrid>(x);
    SparseGrid g = sparsify(d);
    ops = {};
    ops.sites_processed = g.size();
    return g;
  }
  if (auto* sp = std::get_if<SparseGrid>(&x)) {
    if (s.op == OpKind::sparse_to_dense) {
      ops = {};
      ops.sites_processed = sp->size();
      return densify(*sp);
    }
    return run_sparse(s, ws, *sp, st, ops);
  }
  if (auto* d = std::get_if<DenseGrid>(&x)) return run_dense(s, ws, *d, ops);
  return run_flat(s, ws, std::get<std::vector<float>>(x), ops);
}

std::vector<float> into_raw(Activation x) {
  if (auto* v = std::get_if<std::vector<float>>(&x)) return std::move(*v);
  throw ValidationError("network did not end in a flat output");
}

std::vector<float> async_forward(const Pipeline& p, const WeightStore& ws, const DenseGrid& input,
                                 StageObserver* observer) {
  AsyncNetwork net(p, ws);
  net.step(batch_from_grid(sparsify(input)), observer);
  return net.finish(observer);
}

}  // namespace

namespace detail {

std::vector<float> run_tail(const Pipeline& p, const WeightStore& ws, const SparseGrid& x, std::size_t first,
                            StageObserver* observer, std::vector<std::size_t>* processed) {
  if (first >= p.stages.size() || p.stages[first].op != OpKind::sparse_to_dense) {
    throw ValidationError("run_tail must start at the sparse_to_dense stage");
  }
  Activation a = x;
  SampleState st;
  for (std::size_t i = first; i < p.stages.size(); ++i) {
    OpCount ops;
    const auto t0 = Clock::now();
    a = run_stage(p.stages[i], ws, std::move(a), st, ops);
    const auto t1 = Clock::now();
    if (observer) observer->on_stage(i, std::chrono::duration<double>(t1 - t0).count(), ops);
    if (processed) (*processed)[i] += ops.sites_processed;
  }
  return into_raw(std::move(a));
}

}  // namespace detail

std::vector<float> forward(const Pipeline& p, const WeightStore& ws, const DenseGrid& input,
                           StageObserver* observer) {
  check_input(p, input);
  check_compatible(ws, p.spec);
  if (p.backend == Backend::async) return async_forward(p, ws, input, observer);
  Activation x = input;
  SampleState st;
  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    OpCount ops;
    const auto t0 = Clock::now();
    x = run_stage(p.stages[i], ws, std::move(x), st, ops);
    const auto t1 = Clock::now();
    if (observer) observer->on_stage(i, std::chrono::duration<double>(t1 - t0).count(), ops);
  }
  return into_raw(std::move(x));
}

std::vector<std::vector<float>> forward_batch(const Pipeline& p, const WeightStore& ws,
                                              std::span<const DenseGrid> inputs, StageObserver* observer) {
  for (const auto& in : inputs) check_input(p, in);
  check_compatible(ws, p.spec);
  std::vector<std::vector<float>> out;
  out.reserve(inputs.size());
  if (p.backend == Backend::async) {
    for (const auto& in : inputs) out.push_back(async_forward(p, ws, in, observer));
    return out;
  }
  std::vector<Activation> xs(inputs.begin(), inputs.end());
  std::vector<SampleState> states(inputs.size());
  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    for (std::size_t n = 0; n < xs.size(); ++n) {
      OpCount ops;
      const auto t0 = Clock::now();
      xs[n] = run_stage(p.stages[i], ws, std::move(xs[n]), states[n], ops);
      const auto t1 = Clock::now();
      if (observer) observer->on_stage(i, std::chrono::duration<double>(t1 - t0).count(), ops);
    }
  }
  for (auto& x : xs) out.push_back(into_raw(std::move(x)));
  return out;
}

namespace {

class SiteCollector final : public StageObserver {
 public:
  explicit SiteCollector(std::size_t n) : sites(n, 0) {}
  void on_stage(std::size_t i, double, const OpCount& ops) override { sites[i] += ops.sites_processed; }
  std::vector<std::uint64_t> sites;
};

}  // namespace

std::vector<std::uint64_t> sync_sites_processed(const Pipeline& sparse, const WeightStore& ws,
                                                const DenseGrid& input) {
  if (sparse.backend != Backend::sparse) {
    throw ValidationError("sync_sites_processed needs a sparse pipeline");
  }
  SiteCollector c(sparse.stages.size());
  forward(sparse, ws, input, &c);
  return c.sites;
}

}  // namespace spev
