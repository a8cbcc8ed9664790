#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "spev/dense_layers.hpp"
#include "spev/error.hpp"
#include "spev/op_count.hpp"
#include "spev/random.hpp"

using namespace spev;

namespace {

DenseGrid random_dense(Rng& rng, int h, int w, int c) {
  DenseGrid g(h, w, c);
  for (float& v : g.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return g;
}

DenseGrid naive_maxpool(const DenseGrid& x, int k, int s) {
  const auto ar = oracle::same_axis(x.height(), k, s);
  const auto ac = oracle::same_axis(x.width(), k, s);
  DenseGrid out(ar.out, ac.out, x.channels());
  for (int orow = 0; orow < ar.out; ++orow) {
    for (int ocol = 0; ocol < ac.out; ++ocol) {
      for (int ch = 0; ch < x.channels(); ++ch) {
        float m = -std::numeric_limits<float>::infinity();
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < k; ++j) {
            const int r = orow * s - ar.before + i, c = ocol * s - ac.before + j;
            if (r >= 0 && r < x.height() && c >= 0 && c < x.width()) m = std::max(m, x.at(r, c, ch));
          }
        }
        out.at(orow, ocol, ch) = m;
      }
    }
  }
  return out;
}

}  // namespace

TEST(Conv2d, OneByOneIdentity) {
  Rng rng(1);
  const DenseGrid x = random_dense(rng, 4, 5, 1);
  auto w = ConvWeights::zeros(1, 1, 1, 1);
  w.kernel[0] = 1.0f;
  EXPECT_EQ(conv2d(x, w), x);
}

TEST(Conv2d, AllOnesOnDelta) {
  DenseGrid x(5, 5, 1);
  x.at(2, 2, 0) = 1.0f;
  auto w = ConvWeights::zeros(1, 1, 3, 3);
  std::fill(w.kernel.begin(), w.kernel.end(), 1.0f);
  const DenseGrid y = conv2d(x, w);
  EXPECT_EQ(y, oracle::conv(x, w));
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      const bool patch = std::abs(r - 2) <= 1 && std::abs(c - 2) <= 1;
      EXPECT_EQ(y.at(r, c, 0), patch ? 1.0f : 0.0f);
    }
  }
}

TEST(Conv2d, MatchesNaiveLoopOracle) {
  Rng rng(2);
  const DenseGrid x = random_dense(rng, 8, 8, 3);
  const auto w = oracle::random_conv(rng, 3, 4, 3, 2, true);
  const DenseGrid y = conv2d(x, w);
  ASSERT_EQ(y.shape(), (Shape{4, 4, 4}));
  EXPECT_LE(oracle::max_abs(oracle::to_vec(y.values()), oracle::to_vec(oracle::conv(x, w).values())), 1e-6);
}

TEST(Conv2d, RandomShapesAgainstOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = rng.integer(1, 5), s = rng.integer(1, 3);
    const DenseGrid x = random_dense(rng, rng.integer(1, 12), rng.integer(1, 12), rng.integer(1, 4));
    const auto w = oracle::random_conv(rng, x.channels(), rng.integer(1, 4), k, s, true);
    EXPECT_LE(oracle::max_abs(oracle::to_vec(conv2d(x, w).values()), oracle::to_vec(oracle::conv(x, w).values())),
              1e-6);
  }
}

TEST(Conv2d, ValidPadding) {
  DenseGrid x(4, 4, 1);
  for (int i = 0; i < 16; ++i) x.values()[static_cast<std::size_t>(i)] = static_cast<float>(i);
  auto w = ConvWeights::zeros(1, 1, 3, 3, 1, false);
  std::fill(w.kernel.begin(), w.kernel.end(), 1.0f);
  const DenseGrid y = conv2d(x, w);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 1}));
  // 0+1+2+4+5+6+8+9+10
  EXPECT_EQ(y.at(0, 0, 0), 45.0f);
}

TEST(Conv2d, ChannelMismatch) {
  EXPECT_THROW(conv2d(DenseGrid(3, 3, 2), ConvWeights::zeros(1, 3, 3, 3)), ValidationError);
}

TEST(BatchNorm, IdentityStats) {
  Rng rng(4);
  const DenseGrid x = random_dense(rng, 5, 5, 3);
  const DenseGrid y = batchnorm_infer(x, NormStats::identity(3));
  for (std::size_t i = 0; i < x.values().size(); ++i) {
    EXPECT_NEAR(y.values()[i], x.values()[i], 1e-5 * std::max(1.0f, std::fabs(x.values()[i])));
  }
}

TEST(BatchNorm, ScalarFormula) {
  NormStats s{{1.0f}, {4.0f}, {2.0f}, {1.0f}, 0.0f};
  EXPECT_EQ(batchnorm_infer(DenseGrid(1, 1, 1, {3.0f}), s).at(0, 0, 0), 3.0f);
}

TEST(BatchNorm, ElementwiseOracle) {
  Rng rng(5);
  const DenseGrid x = random_dense(rng, 4, 6, 2);
  NormStats s;
  for (int c = 0; c < 2; ++c) {
    s.mean.push_back(static_cast<float>(rng.uniform(-1, 1)));
    s.variance.push_back(static_cast<float>(rng.uniform(0.1, 2)));
    s.scale.push_back(static_cast<float>(rng.uniform(-2, 2)));
    s.shift.push_back(static_cast<float>(rng.uniform(-1, 1)));
  }
  const DenseGrid y = batchnorm_infer(x, s);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 6; ++c) {
      for (int k = 0; k < 2; ++k) {
        const double expect =
            s.scale[k] * (x.at(r, c, k) - s.mean[k]) / std::sqrt(s.variance[k] + s.epsilon) + s.shift[k];
        EXPECT_NEAR(y.at(r, c, k), expect, 1e-6);
      }
    }
  }
  EXPECT_THROW(batchnorm_infer(DenseGrid(1, 1, 3), s), ValidationError);
}

TEST(MaxPool, TwoByTwo) {
  const DenseGrid y = maxpool2d(DenseGrid(2, 2, 1, {1, 2, 3, 4}), 2, 2);
  EXPECT_EQ(y, DenseGrid(1, 1, 1, {4}));
}

TEST(MaxPool, ConstantGrid) {
  const DenseGrid y = maxpool2d(DenseGrid(5, 5, 2, std::vector<float>(50, -0.5f)), 2, 2);
  for (float v : y.values()) EXPECT_EQ(v, -0.5f);
}

TEST(MaxPool, NaiveOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseGrid x = random_dense(rng, rng.integer(1, 9), rng.integer(1, 9), rng.integer(1, 3));
    const int k = rng.integer(1, 3), s = rng.integer(1, 3);
    EXPECT_EQ(maxpool2d(x, k, s), naive_maxpool(x, k, s));
  }
}

TEST(Linear, Identity) {
  auto w = LinearWeights::zeros(3, 3);
  for (int i = 0; i < 3; ++i) w.weight[static_cast<std::size_t>(i * 3 + i)] = 1.0f;
  const std::vector<float> x{1.5f, -2.0f, 0.25f};
  EXPECT_EQ(linear(x, w), x);
}

TEST(Linear, MatrixVectorOracle) {
  Rng rng(7);
  auto w = LinearWeights::zeros(5, 7);
  for (auto& v : w.weight) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : w.bias) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> x(7);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  const auto y = linear(x, w);
  for (int o = 0; o < 5; ++o) {
    double acc = w.bias[static_cast<std::size_t>(o)];
    for (int i = 0; i < 7; ++i) acc += static_cast<double>(w.weight[static_cast<std::size_t>(o * 7 + i)]) * x[i];
    EXPECT_NEAR(y[static_cast<std::size_t>(o)], acc, 1e-6);
  }
  EXPECT_THROW(linear(std::vector<float>(6), w), ValidationError);
}

TEST(LeakyRelu, Formula) {
  EXPECT_FLOAT_EQ(leaky_relu(-1.0f, 0.1f), -0.1f);
  EXPECT_EQ(leaky_relu(2.0f, 0.1f), 2.0f);
  const auto v = leaky_relu(std::vector<float>{-2.0f, 3.0f}, 0.5f);
  EXPECT_EQ(v, (std::vector<float>{-1.0f, 3.0f}));
}

TEST(OpCount, DenseConvExample) {
  const auto w = ConvWeights::zeros(1, 1, 3, 3);
  EXPECT_EQ(dense_conv_op_count({5, 5, 1}, w).multiply_accumulates, 5u * 5u * 9u);
}

TEST(OpCount, DenseConvFormula) {
  const auto w = ConvWeights::zeros(4, 3, 3, 3, 2);
  // out 4x4 on 8x8 stride 2
  EXPECT_EQ(dense_conv_op_count({8, 8, 3}, w).multiply_accumulates, 4u * 4u * 9u * 3u * 4u);
  EXPECT_EQ(linear_op_count(7, 5).multiply_accumulates, 35u);
  EXPECT_EQ(elementwise_op_count(10, 3).sites_processed, 10u);
}
