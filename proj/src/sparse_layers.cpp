#include "spev/sparse_layers.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include "spev/error.hpp"

namespace spev {

SiteIndex::SiteIndex(std::span<const Coord> sites) {
  index_.reserve(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    index_.emplace(coord_key(sites[i]), static_cast<int>(i));
  }
}

std::size_t Rulebook::pair_count() const {
  std::size_t n = 0;
  for (const auto& group : pairs) n += group.size();
  return n;
}

bool Rulebook::matches(std::span<const Coord> sites, int height, int width) const {
  return height == in_height && width == in_width &&
         std::ranges::equal(sites, input_sites);
}

Rulebook build_rulebook(std::span<const Coord> in_sites, int height, int width, int kernel_h,
                        int kernel_w, int stride, ConvMode mode, bool same_padding) {
  if (kernel_h < 1 || kernel_w < 1 || stride < 1) {
    throw ValidationError("rulebook: kernel dims and stride must be >= 1");
  }
  if (mode == ConvMode::submanifold &&
      (stride != 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0 || !same_padding)) {
    throw ValidationError("submanifold rulebook requires stride 1, same padding and odd kernel dims, got " +
                          std::to_string(kernel_h) + "x" + std::to_string(kernel_w) + " stride " +
                          std::to_string(stride));
  }
  const AxisGeometry rows = window_geometry(height, kernel_h, stride, same_padding);
  const AxisGeometry cols = window_geometry(width, kernel_w, stride, same_padding);

  Rulebook rb;
  rb.mode = mode;
  rb.kernel_h = kernel_h;
  rb.kernel_w = kernel_w;
  rb.stride = stride;
  rb.same_padding = same_padding;
  rb.in_height = height;
  rb.in_width = width;
  rb.out_height = rows.out_extent;
  rb.out_width = cols.out_extent;
  rb.input_sites.assign(in_sites.begin(), in_sites.end());
  rb.pairs.resize(static_cast<std::size_t>(kernel_h) * kernel_w);

  if (mode == ConvMode::submanifold) {
    // Output sites are the input sites; the grid size is unchanged.
    rb.output_sites = rb.input_sites;
    const SiteIndex index(in_sites);
    for (int kr = 0; kr < kernel_h; ++kr) {
      for (int kc = 0; kc < kernel_w; ++kc) {
        auto& group = rb.pairs[static_cast<std::size_t>(kr) * kernel_w + kc];
        for (std::size_t o = 0; o < in_sites.size(); ++o) {
          const Coord src{in_sites[o].row - rows.before + kr, in_sites[o].col - cols.before + kc};
          if (auto i = index.find(src)) {
            group.push_back({*i, static_cast<int>(o)});
          }
        }
      }
    }
    return rb;
  }

  struct Hit {
    int offset;
    int in;
    Coord out;
  };
  std::vector<Hit> hits;
  std::vector<Coord> outputs;
  for (std::size_t i = 0; i < in_sites.size(); ++i) {
    const Coord s = in_sites[i];
    for (int kr = 0; kr < kernel_h; ++kr) {
      const int num_r = s.row + rows.before - kr;
      if (num_r < 0 || num_r % stride != 0 || num_r / stride >= rows.out_extent) continue;
      for (int kc = 0; kc < kernel_w; ++kc) {
        const int num_c = s.col + cols.before - kc;
        if (num_c < 0 || num_c % stride != 0 || num_c / stride >= cols.out_extent) continue;
        const Coord out{num_r / stride, num_c / stride};
        hits.push_back({kr * kernel_w + kc, static_cast<int>(i), out});
        outputs.push_back(out);
      }
    }
  }
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  const SiteIndex out_index(outputs);
  for (const Hit& h : hits) {
    rb.pairs[static_cast<std::size_t>(h.offset)].push_back({h.in, *out_index.find(h.out)});
  }
  for (auto& group : rb.pairs) {
    std::sort(group.begin(), group.end(),
              [](const RulePair& a, const RulePair& b) { return a.out < b.out; });
  }
  rb.output_sites = std::move(outputs);
  return rb;
}

namespace {

void check_rulebook(const SparseGrid& in, const ConvWeights& w, const Rulebook& rb, ConvMode mode,
                    const char* op) {
  w.validate();
  if (rb.mode != mode) {
    throw ValidationError(std::string(op) + ": rulebook built for the other convolution mode");
  }
  if (in.channels() != w.in_channels) {
    throw ValidationError(std::string(op) + ": input has " + std::to_string(in.channels()) +
                          " channels, weights expect " + std::to_string(w.in_channels));
  }
  if (rb.kernel_h != w.kernel_h || rb.kernel_w != w.kernel_w || rb.stride != w.stride ||
      rb.same_padding != w.same_padding) {
    throw ValidationError(std::string(op) + ": rulebook geometry does not match the weights");
  }
  if (!rb.matches(in.sites(), in.height(), in.width())) {
    throw ValidationError(std::string(op) + ": rulebook was built for a different site set");
  }
}

SparseGrid run_rulebook(const SparseGrid& in, const ConvWeights& w, const Rulebook& rb) {
  const auto n_out = rb.output_sites.size();
  const auto oc = static_cast<std::size_t>(w.out_channels);
  std::vector<double> acc(n_out * oc, 0.0);
  for (int kr = 0; kr < rb.kernel_h; ++kr) {
    for (int kc = 0; kc < rb.kernel_w; ++kc) {
      for (const RulePair& p : rb.pairs[static_cast<std::size_t>(kr) * rb.kernel_w + kc]) {
        detail::accumulate_tap(std::span<double>(acc).subspan(static_cast<std::size_t>(p.out) * oc, oc),
                               in.feature(static_cast<std::size_t>(p.in)), w, kr, kc);
      }
    }
  }
  std::vector<float> features(n_out * oc);
  for (std::size_t o = 0; o < n_out; ++o) {
    detail::finish_conv(std::span<const double>(acc).subspan(o * oc, oc), w,
                        std::span<float>(features).subspan(o * oc, oc));
  }
  return SparseGrid(rb.out_height, rb.out_width, w.out_channels, rb.output_sites,
                    std::move(features));
}

}  // namespace

SparseGrid sparse_conv(const SparseGrid& in, const ConvWeights& w, const Rulebook& rb) {
  check_rulebook(in, w, rb, ConvMode::full, "sparse_conv");
  return run_rulebook(in, w, rb);
}

SparseGrid submanifold_conv(const SparseGrid& in, const ConvWeights& w, const Rulebook& rb) {
  check_rulebook(in, w, rb, ConvMode::submanifold, "submanifold_conv");
  return run_rulebook(in, w, rb);
}

SparseGrid sparse_batchnorm_infer(const SparseGrid& in, const NormStats& s) {
  s.validate();
  if (in.channels() != s.channels()) {
    throw ValidationError("sparse batchnorm: input has " + std::to_string(in.channels()) +
                          " channels, stats have " + std::to_string(s.channels()));
  }
  SparseGrid out = in;
  auto f = out.features();
  const auto ch = static_cast<std::size_t>(in.channels());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = s.apply(static_cast<int>(i % ch), f[i]);
  }
  return out;
}

SparseGrid sparse_leaky_relu(const SparseGrid& in, float alpha) {
  SparseGrid out = in;
  for (float& v : out.features()) v = leaky_relu(v, alpha);
  return out;
}

SparseGrid sparse_maxpool(const SparseGrid& in, int window, int stride) {
  if (window < 1 || stride < 1) {
    throw ValidationError("sparse maxpool: window and stride must be >= 1");
  }
  const auto rows = same_padding(in.height(), window, stride);
  const auto cols = same_padding(in.width(), window, stride);
  const auto ch = static_cast<std::size_t>(in.channels());
  std::map<Coord, std::vector<float>> pooled;
  const auto sites = in.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto x = in.feature(i);
    for (int kr = 0; kr < window; ++kr) {
      const int num_r = sites[i].row + rows.before - kr;
      if (num_r < 0 || num_r % stride != 0 || num_r / stride >= rows.out_extent) continue;
      for (int kc = 0; kc < window; ++kc) {
        const int num_c = sites[i].col + cols.before - kc;
        if (num_c < 0 || num_c % stride != 0 || num_c / stride >= cols.out_extent) continue;
        auto [it, fresh] = pooled.try_emplace(Coord{num_r / stride, num_c / stride},
                                              ch, -std::numeric_limits<float>::infinity());
        for (std::size_t c = 0; c < ch; ++c) {
          it->second[c] = std::max(it->second[c], x[c]);
        }
      }
    }
  }
  std::vector<Coord> out_sites;
  std::vector<float> features;
  out_sites.reserve(pooled.size());
  features.reserve(pooled.size() * ch);
  for (auto& [c, v] : pooled) {
    out_sites.push_back(c);
    features.insert(features.end(), v.begin(), v.end());
  }
  return SparseGrid(rows.out_extent, cols.out_extent, in.channels(), std::move(out_sites),
                    std::move(features));
}

}  // namespace spev
