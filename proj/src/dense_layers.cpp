#include "spev/dense_layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spev/error.hpp"

namespace spev {

ConvWeights ConvWeights::zeros(int out_channels, int in_channels, int kernel_h, int kernel_w,
                               int stride, bool same_padding) {
  ConvWeights w;
  w.out_channels = out_channels;
  w.in_channels = in_channels;
  w.kernel_h = kernel_h;
  w.kernel_w = kernel_w;
  w.stride = stride;
  w.same_padding = same_padding;
  w.kernel.assign(static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w, 0.0f);
  w.bias.assign(static_cast<std::size_t>(out_channels), 0.0f);
  return w;
}

void ConvWeights::validate() const {
  if (out_channels < 1 || in_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1) {
    throw ValidationError("conv weights: channels, kernel dims and stride must be >= 1");
  }
  if (kernel.size() != static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w ||
      bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ValidationError("conv weights: kernel/bias sizes do not match dimensions");
  }
}

NormStats NormStats::identity(int channels, float epsilon) {
  NormStats s;
  s.mean.assign(static_cast<std::size_t>(channels), 0.0f);
  s.variance.assign(static_cast<std::size_t>(channels), 1.0f);
  s.scale.assign(static_cast<std::size_t>(channels), 1.0f);
  s.shift.assign(static_cast<std::size_t>(channels), 0.0f);
  s.epsilon = epsilon;
  return s;
}

void NormStats::validate() const {
  const auto n = mean.size();
  if (n == 0 || variance.size() != n || scale.size() != n || shift.size() != n) {
    throw ValidationError("norm stats: per-channel vectors must be non-empty and equal length");
  }
  if (!(epsilon >= 0.0f)) {
    throw ValidationError("norm stats: epsilon must be non-negative");
  }
  for (float v : variance) {
    if (!(v >= 0.0f)) {
      throw ValidationError("norm stats: variance must be non-negative");
    }
  }
}

float NormStats::apply(int ch, float x) const {
  const auto c = static_cast<std::size_t>(ch);
  const double denom = std::sqrt(static_cast<double>(variance[c]) + static_cast<double>(epsilon));
  return static_cast<float>(static_cast<double>(scale[c]) *
                                (static_cast<double>(x) - static_cast<double>(mean[c])) / denom +
                            static_cast<double>(shift[c]));
}

LinearWeights LinearWeights::zeros(int out_features, int in_features) {
  LinearWeights w;
  w.out_features = out_features;
  w.in_features = in_features;
  w.weight.assign(static_cast<std::size_t>(out_features) * in_features, 0.0f);
  w.bias.assign(static_cast<std::size_t>(out_features), 0.0f);
  return w;
}

void LinearWeights::validate() const {
  if (out_features < 1 || in_features < 1 ||
      weight.size() != static_cast<std::size_t>(out_features) * in_features ||
      bias.size() != static_cast<std::size_t>(out_features)) {
    throw ValidationError("linear weights: sizes do not match dimensions");
  }
}

ConvGeometry conv_geometry(const Shape& in, const ConvWeights& w) {
  return {window_geometry(in.height, w.kernel_h, w.stride, w.same_padding),
          window_geometry(in.width, w.kernel_w, w.stride, w.same_padding)};
}

DenseGrid conv2d(const DenseGrid& in, const ConvWeights& w) {
  w.validate();
  if (in.channels() != w.in_channels) {
    throw ValidationError("conv2d: input has " + std::to_string(in.channels()) +
                          " channels, weights expect " + std::to_string(w.in_channels));
  }
  const auto geo = conv_geometry(in.shape(), w);
  DenseGrid out(geo.rows.out_extent, geo.cols.out_extent, w.out_channels);
  std::vector<double> acc(static_cast<std::size_t>(w.out_channels));
  for (int orow = 0; orow < out.height(); ++orow) {
    for (int ocol = 0; ocol < out.width(); ++ocol) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int kr = 0; kr < w.kernel_h; ++kr) {
        const int irow = orow * w.stride - geo.rows.before + kr;
        if (irow < 0 || irow >= in.height()) continue;
        for (int kc = 0; kc < w.kernel_w; ++kc) {
          const int icol = ocol * w.stride - geo.cols.before + kc;
          if (icol < 0 || icol >= in.width()) continue;
          detail::accumulate_tap(acc, in.pixel(irow, icol), w, kr, kc);
        }
      }
      detail::finish_conv(acc, w, out.pixel(orow, ocol));
    }
  }
  return out;
}

DenseGrid batchnorm_infer(const DenseGrid& in, const NormStats& s) {
  s.validate();
  if (in.channels() != s.channels()) {
    throw ValidationError("batchnorm: input has " + std::to_string(in.channels()) +
                          " channels, stats have " + std::to_string(s.channels()));
  }
  DenseGrid out(in.height(), in.width(), in.channels());
  auto src = in.values();
  auto dst = out.values();
  const int ch = in.channels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = s.apply(static_cast<int>(i % static_cast<std::size_t>(ch)), src[i]);
  }
  return out;
}

DenseGrid maxpool2d(const DenseGrid& in, int window, int stride) {
  if (window < 1 || stride < 1) {
    throw ValidationError("maxpool: window and stride must be >= 1");
  }
  const auto rows = same_padding(in.height(), window, stride);
  const auto cols = same_padding(in.width(), window, stride);
  DenseGrid out(rows.out_extent, cols.out_extent, in.channels());
  for (int orow = 0; orow < out.height(); ++orow) {
    for (int ocol = 0; ocol < out.width(); ++ocol) {
      auto px = out.pixel(orow, ocol);
      std::fill(px.begin(), px.end(), -std::numeric_limits<float>::infinity());
      for (int kr = 0; kr < window; ++kr) {
        const int irow = orow * stride - rows.before + kr;
        if (irow < 0 || irow >= in.height()) continue;
        for (int kc = 0; kc < window; ++kc) {
          const int icol = ocol * stride - cols.before + kc;
          if (icol < 0 || icol >= in.width()) continue;
          const auto x = in.pixel(irow, icol);
          for (std::size_t c = 0; c < px.size(); ++c) {
            px[c] = std::max(px[c], x[c]);
          }
        }
      }
    }
  }
  return out;
}

std::vector<float> linear(std::span<const float> in, const LinearWeights& w) {
  w.validate();
  if (in.size() != static_cast<std::size_t>(w.in_features)) {
    throw ValidationError("linear: input has " + std::to_string(in.size()) +
                          " features, weights expect " + std::to_string(w.in_features));
  }
  std::vector<float> out(static_cast<std::size_t>(w.out_features));
  for (int o = 0; o < w.out_features; ++o) {
    const float* row = w.weight.data() + static_cast<std::size_t>(o) * w.in_features;
    double acc = 0.0;
    for (int i = 0; i < w.in_features; ++i) {
      acc += static_cast<double>(row[i]) * in[static_cast<std::size_t>(i)];
    }
    out[static_cast<std::size_t>(o)] =
        static_cast<float>(acc + w.bias[static_cast<std::size_t>(o)]);
  }
  return out;
}

DenseGrid leaky_relu(const DenseGrid& in, float alpha) {
  DenseGrid out = in;
  for (float& v : out.values()) v = leaky_relu(v, alpha);
  return out;
}

std::vector<float> leaky_relu(std::span<const float> in, float alpha) {
  std::vector<float> out(in.begin(), in.end());
  for (float& v : out) v = leaky_relu(v, alpha);
  return out;
}

}  // namespace spev
