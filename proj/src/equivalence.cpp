#include "spev/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <type_traits>

#include "spev/async_layers.hpp"
#include "spev/error.hpp"
#include "spev/events.hpp"
#include "spev/pipeline.hpp"
#include "spev/random.hpp"
#include "spev/sparse_layers.hpp"
#include "spev/synth.hpp"

namespace spev {

bool pool_safe(const NetworkSpec& spec) {
  bool non_negative = true;  // event histograms are counts
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::sparse_to_dense: return true;
      case LayerKind::leaky_relu: non_negative = l.alpha == 0.0f; break;
      case LayerKind::maxpool:
        if (!non_negative) return false;
        break;
      default: non_negative = false; break;
    }
  }
  return true;
}

namespace {

constexpr double kSampleDensity = 0.05;

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]);
    if (!(d <= worst)) worst = d;  // NaN-propagating
  }
  return worst;
}

// Largest deviation of `y` from `ref` at y's active sites; inactive
// positions of `ref` must hold `inactive(ch)` (skipped when null).
template <typename Inactive>
double compare_to_dense(const SparseGrid& y, const DenseGrid& ref, Inactive inactive) {
  if (y.shape() != ref.shape()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  const auto sites = y.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    worst = std::max(worst, max_abs_diff(y.feature(i), ref.pixel(sites[i].row, sites[i].col)));
  }
  if constexpr (!std::is_same_v<Inactive, std::nullptr_t>) {
    for (int r = 0; r < ref.height(); ++r) {
      for (int c = 0; c < ref.width(); ++c) {
        if (y.find({r, c})) continue;
        for (int k = 0; k < ref.channels(); ++k) {
          if (ref.at(r, c, k) != inactive(k)) {
            return std::numeric_limits<double>::infinity();
          }
        }
      }
    }
  }
  return worst;
}

// Walks the sparse section of `p`, checking every stage against the dense
// kernel on the densified input.
double per_layer_deviation(const Pipeline& p, const WeightStore& ws, const DenseGrid& input, std::string& where) {
  SparseGrid x = sparsify(input);
  double worst = 0.0;
  for (const Stage& s : p.stages) {
    if (!s.sparse || s.op == OpKind::input) continue;
    SparseGrid y;
    double dev = 0.0;
    switch (s.op) {
      case OpKind::submanifold_conv:
      case OpKind::sparse_conv: {
        const ConvWeights& w = ws.conv(static_cast<std::size_t>(s.block));
        const DenseGrid ref = conv2d(densify(x), w);
        if (s.op == OpKind::submanifold_conv) {
          y = submanifold_conv(x, w, build_rulebook(x.sites(), x.height(), x.width(), w.kernel_h, w.kernel_w, 1,
                                                    ConvMode::submanifold));
          dev = std::ranges::equal(y.sites(), x.sites()) ? compare_to_dense(y, ref, nullptr)
                                                         : std::numeric_limits<double>::infinity();
        } else {
          y = sparse_conv(x, w, build_rulebook(x.sites(), x.height(), x.width(), w.kernel_h, w.kernel_w, w.stride,
                                               ConvMode::full, w.same_padding));
          dev = compare_to_dense(y, ref, [&](int k) { return w.bias[static_cast<std::size_t>(k)]; });
        }
        break;
      }
      case OpKind::batchnorm: {
        const NormStats& n = ws.norm(static_cast<std::size_t>(s.block));
        y = sparse_batchnorm_infer(x, n);
        dev = compare_to_dense(y, batchnorm_infer(densify(x), n), nullptr);
        break;
      }
      case OpKind::leaky_relu:
        y = sparse_leaky_relu(x, s.alpha);
        dev = compare_to_dense(y, leaky_relu(densify(x), s.alpha), nullptr);
        break;
      case OpKind::maxpool: {
        // Inactive positions become -inf so the dense pool ignores them too.
        DenseGrid d(x.height(), x.width(), x.channels(),
                    std::vector<float>(x.shape().size(), -std::numeric_limits<float>::infinity()));
        for (std::size_t i = 0; i < x.size(); ++i) {
          const auto f = x.feature(i);
          std::copy(f.begin(), f.end(), d.pixel(x.sites()[i].row, x.sites()[i].col).begin());
        }
        y = sparse_maxpool(x, s.kernel, s.stride);
        dev = compare_to_dense(y, maxpool2d(d, s.kernel, s.stride),
                               [](int) { return -std::numeric_limits<float>::infinity(); });
        break;
      }
      default: break;
    }
    if (!(dev <= worst)) {
      worst = dev;
      where = "stage " + stage_kind_name(p.backend, s) + " (layer " + std::to_string(s.layer) + ")";
    }
    x = std::move(y);
  }
  return worst;
}

std::vector<EventStream> random_partition(const EventStream& s, int parts, Rng& rng) {
  std::vector<std::size_t> cuts;
  for (int i = 1; i < parts; ++i) cuts.push_back(rng.index(s.size() + 1));
  std::sort(cuts.begin(), cuts.end());
  return split_at(s, cuts);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

EquivalenceReport check_equivalence(const NetworkSpec& spec, std::uint64_t seed, int trials, double tolerance) {
  if (trials < 1) throw ValidationError("equivalence check: trials must be >= 1");
  if (spec.input.channels != 2) {
    throw ValidationError("equivalence check needs a 2-channel event histogram input");
  }
  validate(spec);
  EquivalenceReport report;
  report.trials = trials;
  report.tolerance = tolerance;

  const WeightStore ws = random_weights(spec, seed);
  const WeightStore ws0 = random_weights(spec, seed ^ 0x9e3779b97f4a7c15ULL, {.zero_preserving = true});
  const Pipeline sparse = lower(spec, Backend::sparse);
  const Pipeline sparse_full = lower(spec, Backend::sparse, {.full_mode_convs = true});
  const Pipeline async = lower(spec, Backend::async);
  const Pipeline async_full = lower(spec, Backend::async, {.full_mode_convs = true});
  const Pipeline dense = lower(spec, Backend::dense);
  const bool whole_network = pool_safe(spec);
  if (whole_network) report.dense_vs_sparse = 0.0;

  Rng rng(seed);
  const int w = spec.input.width;
  const int h = spec.input.height;
  for (int t = 0; t < trials; ++t) {
    const EventStream sample = random_event_sample(w, h, kSampleDensity, rng);
    const DenseGrid hist = histogram(sample, w, h);
    const std::string tag = "trial " + std::to_string(t) + ": ";

    for (const Pipeline* pair : {&sparse, &sparse_full}) {
      const Pipeline& a = pair == &sparse ? async : async_full;
      const int parts = rng.integer(1, 5);
      const auto seqs = random_partition(sample, parts, rng);
      const auto sync_raw = forward(*pair, ws, hist);
      const auto async_raw = async_run(a, ws, seqs).raw;
      const double d = max_abs_diff(sync_raw, async_raw);
      report.async_vs_sparse = std::max(report.async_vs_sparse, d);
      if (!(d <= tolerance)) {
        report.failures.push_back(tag + "async (" + std::to_string(parts) + " sequences" +
                                  (pair == &sparse ? "" : ", full-mode convs") + ") differs from sparse by " +
                                  fmt(d));
      }
    }

    for (const Pipeline* p : {&sparse, &sparse_full}) {
      std::string where;
      const double d = per_layer_deviation(*p, ws, hist, where);
      report.layer_vs_dense = std::max(report.layer_vs_dense, d);
      if (!(d <= tolerance)) {
        report.failures.push_back(tag + where + " differs from its dense oracle by " + fmt(d));
      }
    }

    if (whole_network) {
      const double d = max_abs_diff(forward(dense, ws0, hist), forward(sparse_full, ws0, hist));
      report.dense_vs_sparse = std::max(*report.dense_vs_sparse, d);
      if (!(d <= tolerance)) {
        report.failures.push_back(tag + "dense differs from full-mode sparse by " + fmt(d));
      }
    }
  }
  return report;
}

}  // namespace spev
