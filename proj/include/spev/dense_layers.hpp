#pragma once

#include <span>
#include <vector>

#include "spev/tensor.hpp"

namespace spev {

inline constexpr float kDefaultLeakySlope = 0.1f;

// Convolution filter bank. Kernel layout [out][in][kh][kw].
struct ConvWeights {
  int out_channels = 1;
  int in_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  bool same_padding = true;
  std::vector<float> kernel;
  std::vector<float> bias;

  static ConvWeights zeros(int out_channels, int in_channels, int kernel_h, int kernel_w,
                           int stride = 1, bool same_padding = true);

  float& tap(int oc, int ic, int kr, int kc) {
    return kernel[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_h + kr) * kernel_w +
                  kc];
  }
  float tap(int oc, int ic, int kr, int kc) const {
    return kernel[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_h + kr) * kernel_w +
                  kc];
  }

  // Throws ValidationError on inconsistent sizes.
  void validate() const;
};

// Inference-mode batch normalization statistics.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> variance;
  std::vector<float> scale;
  std::vector<float> shift;
  float epsilon = 1e-5f;

  static NormStats identity(int channels, float epsilon = 1e-5f);

  int channels() const { return static_cast<int>(mean.size()); }
  void validate() const;
  // y = scale * (x - mean) / sqrt(var + eps) + shift, in double then rounded.
  float apply(int ch, float x) const;
};

// Row-major [out][in] matrix plus bias.
struct LinearWeights {
  int out_features = 1;
  int in_features = 1;
  std::vector<float> weight;
  std::vector<float> bias;

  static LinearWeights zeros(int out_features, int in_features);
  void validate() const;
};

struct ConvGeometry {
  AxisGeometry rows;
  AxisGeometry cols;
};

ConvGeometry conv_geometry(const Shape& in, const ConvWeights& w);

// Cross-correlation (no kernel flip). Per-output accumulation in double.
DenseGrid conv2d(const DenseGrid& in, const ConvWeights& w);
DenseGrid batchnorm_infer(const DenseGrid& in, const NormStats& s);
// 'same' geometry; padded cells are -infinity and never win.
DenseGrid maxpool2d(const DenseGrid& in, int window, int stride);
std::vector<float> linear(std::span<const float> in, const LinearWeights& w);

inline float leaky_relu(float x, float alpha = kDefaultLeakySlope) { return x >= 0.0f ? x : alpha * x; }
DenseGrid leaky_relu(const DenseGrid& in, float alpha = kDefaultLeakySlope);
std::vector<float> leaky_relu(std::span<const float> in, float alpha = kDefaultLeakySlope);

namespace detail {

// Adds one kernel tap's contribution sum_ic w[oc][ic][kr][kc] * x[ic] to
// acc[oc]. All conv paths go through this so their sums are bit-identical.
inline void accumulate_tap(std::span<double> acc, std::span<const float> x, const ConvWeights& w,
                           int kr, int kc) {
  for (int oc = 0; oc < w.out_channels; ++oc) {
    double sum = 0.0;
    for (int ic = 0; ic < w.in_channels; ++ic) {
      sum += static_cast<double>(w.tap(oc, ic, kr, kc)) * x[static_cast<std::size_t>(ic)];
    }
    acc[static_cast<std::size_t>(oc)] += sum;
  }
}

inline void finish_conv(std::span<const double> acc, const ConvWeights& w, std::span<float> out) {
  for (int oc = 0; oc < w.out_channels; ++oc) {
    const auto o = static_cast<std::size_t>(oc);
    out[o] = static_cast<float>(acc[o] + w.bias[o]);
  }
}

}  // namespace detail

}  // namespace spev
