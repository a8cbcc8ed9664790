#include "spev/op_count.hpp"

#include "spev/dense_layers.hpp"

namespace spev {

OpCount dense_conv_op_count(const Shape& in, const ConvWeights& w) {
  const auto geo = conv_geometry(in, w);
  const auto positions = static_cast<std::uint64_t>(geo.rows.out_extent) * geo.cols.out_extent;
  OpCount c;
  c.multiply_accumulates = positions * static_cast<std::uint64_t>(w.kernel_h) * w.kernel_w *
                           static_cast<std::uint64_t>(w.in_channels) * w.out_channels;
  c.sites_processed = positions;
  return c;
}

OpCount sparse_conv_op_count(const Rulebook& rb, int in_channels, int out_channels) {
  OpCount c;
  c.rulebook_pairs = rb.pair_count();
  c.multiply_accumulates =
      c.rulebook_pairs * static_cast<std::uint64_t>(in_channels) * static_cast<std::uint64_t>(out_channels);
  c.sites_processed = rb.output_sites.size();
  return c;
}

OpCount elementwise_op_count(std::uint64_t sites, int channels) {
  OpCount c;
  c.multiply_accumulates = sites * static_cast<std::uint64_t>(channels);
  c.sites_processed = sites;
  return c;
}

OpCount linear_op_count(int in_features, int out_features) {
  OpCount c;
  c.multiply_accumulates = static_cast<std::uint64_t>(in_features) * static_cast<std::uint64_t>(out_features);
  c.sites_processed = 1;
  return c;
}

}  // namespace spev
