#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "oracles.hpp"
#include "spev/error.hpp"
#include "spev/op_count.hpp"
#include "spev/random.hpp"
#include "spev/sparse_layers.hpp"

using namespace spev;

namespace {

using Triple = std::tuple<int, Coord, Coord>;  // offset, input site, output site

// Every (offset, in, out) the kernel connects, by scanning all output
// positions and all taps.
std::set<Triple> brute_pairs(const std::vector<Coord>& in, int h, int w, int k, int s, ConvMode mode) {
  const auto ar = oracle::same_axis(h, k, s);
  const auto ac = oracle::same_axis(w, k, s);
  const std::set<Coord> active(in.begin(), in.end());
  std::set<Triple> out;
  for (int orow = 0; orow < ar.out; ++orow) {
    for (int ocol = 0; ocol < ac.out; ++ocol) {
      if (mode == ConvMode::submanifold && !active.count({orow, ocol})) continue;
      for (int kr = 0; kr < k; ++kr) {
        for (int kc = 0; kc < k; ++kc) {
          const Coord src{orow * s - ar.before + kr, ocol * s - ac.before + kc};
          if (active.count(src)) out.insert({kr * k + kc, src, Coord{orow, ocol}});
        }
      }
    }
  }
  return out;
}

std::set<Triple> rulebook_pairs(const Rulebook& rb) {
  std::set<Triple> out;
  for (std::size_t off = 0; off < rb.pairs.size(); ++off) {
    for (const auto& p : rb.pairs[off]) {
      out.insert({static_cast<int>(off), rb.input_sites[static_cast<std::size_t>(p.in)],
                  rb.output_sites[static_cast<std::size_t>(p.out)]});
    }
  }
  return out;
}

std::vector<Coord> sites_of(const SparseGrid& g) { return {g.sites().begin(), g.sites().end()}; }

Rulebook rulebook_for(const SparseGrid& g, const ConvWeights& w, ConvMode mode) {
  return build_rulebook(g.sites(), g.height(), g.width(), w.kernel_h, w.kernel_w, w.stride, mode, w.same_padding);
}

}  // namespace

TEST(Rulebook, SingleSiteSubmanifold) {
  const std::vector<Coord> in{{2, 2}};
  const auto rb = build_rulebook(in, 5, 5, 3, 3, 1, ConvMode::submanifold);
  EXPECT_EQ(rb.output_sites.size(), 1u);
  EXPECT_EQ(rb.pair_count(), 1u);
  EXPECT_EQ(rulebook_pairs(rb), brute_pairs(in, 5, 5, 3, 1, ConvMode::submanifold));
  EXPECT_EQ(rb.pairs[4].size(), 1u);
}

TEST(Rulebook, DiagonalPairSubmanifold) {
  const std::vector<Coord> in{{0, 0}, {1, 1}};
  const auto rb = build_rulebook(in, 3, 3, 3, 3, 1, ConvMode::submanifold);
  const auto expect = brute_pairs(in, 3, 3, 3, 1, ConvMode::submanifold);
  EXPECT_EQ(expect.size(), 4u);
  EXPECT_EQ(rb.output_sites.size(), 2u);
  EXPECT_EQ(rulebook_pairs(rb), expect);
}

TEST(Rulebook, SingleSiteFull) {
  const std::vector<Coord> in{{1, 1}};
  const auto rb = build_rulebook(in, 3, 3, 3, 3, 1, ConvMode::full);
  const auto expect = brute_pairs(in, 3, 3, 3, 1, ConvMode::full);
  EXPECT_EQ(expect.size(), 9u);
  EXPECT_EQ(rb.output_sites.size(), 9u);
  EXPECT_EQ(rulebook_pairs(rb), expect);
}

TEST(Rulebook, RandomAgainstEnumeration) {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = rng.integer(1, 12), w = rng.integer(1, 12);
    const auto g = oracle::random_sparse(rng, h, w, 1, 0.25);
    const bool full = rng.coin();
    const int k = full ? rng.integer(1, 4) : 2 * rng.integer(0, 2) + 1;
    const int s = full ? rng.integer(1, 3) : 1;
    const auto mode = full ? ConvMode::full : ConvMode::submanifold;
    const auto rb = build_rulebook(g.sites(), h, w, k, k, s, mode);
    EXPECT_EQ(rulebook_pairs(rb), brute_pairs(sites_of(g), h, w, k, s, mode));
    if (full) {
      const auto reach = oracle::reachable_outputs(sites_of(g), h, w, k, s);
      EXPECT_EQ(std::set<Coord>(rb.output_sites.begin(), rb.output_sites.end()), reach);
    }
    EXPECT_TRUE(std::is_sorted(rb.output_sites.begin(), rb.output_sites.end()));
    for (const auto& group : rb.pairs) {
      EXPECT_TRUE(std::is_sorted(group.begin(), group.end(),
                                 [](const RulePair& a, const RulePair& b) { return a.out < b.out; }));
    }
  }
}

TEST(Rulebook, SubmanifoldRejectsStrideAndEvenKernel) {
  const std::vector<Coord> in{{0, 0}};
  EXPECT_THROW(build_rulebook(in, 4, 4, 3, 3, 2, ConvMode::submanifold), ValidationError);
  EXPECT_THROW(build_rulebook(in, 4, 4, 2, 2, 1, ConvMode::submanifold), ValidationError);
}

TEST(Rulebook, Matches) {
  const std::vector<Coord> in{{0, 0}, {2, 1}};
  const auto rb = build_rulebook(in, 4, 4, 3, 3, 1, ConvMode::submanifold);
  EXPECT_TRUE(rb.matches(in, 4, 4));
  const std::vector<Coord> other{{0, 0}};
  EXPECT_FALSE(rb.matches(other, 4, 4));
  EXPECT_FALSE(rb.matches(in, 5, 4));
}

TEST(SparseConv, EmptyInput) {
  const SparseGrid g(6, 6, 2);
  Rng rng(42);
  const auto w = oracle::random_conv(rng, 2, 3, 3, 2, true);
  const auto y = sparse_conv(g, w, rulebook_for(g, w, ConvMode::full));
  EXPECT_TRUE(y.empty());
  EXPECT_EQ(y.shape(), (Shape{3, 3, 3}));
}

TEST(SparseConv, OneByOneIdentity) {
  const SparseGrid g(4, 4, 1, {{1, 3}}, {2.5f});
  auto w = ConvWeights::zeros(1, 1, 1, 1);
  w.kernel[0] = 1.0f;
  EXPECT_EQ(sparse_conv(g, w, rulebook_for(g, w, ConvMode::full)), g);
}

TEST(SparseConv, MatchesDenseConv) {
  Rng rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = oracle::random_sparse(rng, rng.integer(1, 16), rng.integer(1, 16), rng.integer(1, 4), 0.2);
    const auto w = oracle::random_conv(rng, g.channels(), rng.integer(1, 4), rng.integer(1, 4), rng.integer(1, 2),
                                       false);
    const auto y = sparse_conv(g, w, rulebook_for(g, w, ConvMode::full));
    const auto d = oracle::conv(densify(g), w);
    EXPECT_LE(oracle::max_abs(oracle::to_vec(densify(y).values()), oracle::to_vec(d.values())), 1e-5);
  }
}

TEST(SparseConv, RulebookMismatch) {
  const SparseGrid a(4, 4, 1, {{0, 0}}, {1.0f});
  const SparseGrid b(4, 4, 1, {{1, 1}}, {1.0f});
  const auto w = ConvWeights::zeros(1, 1, 3, 3);
  EXPECT_THROW(sparse_conv(b, w, rulebook_for(a, w, ConvMode::full)), ValidationError);
  EXPECT_THROW(submanifold_conv(b, w, rulebook_for(a, w, ConvMode::submanifold)), ValidationError);
}

TEST(SubmanifoldConv, SingleSiteCenterTap) {
  Rng rng(44);
  const SparseGrid g(5, 5, 1, {{2, 3}}, {0.75f});
  const auto w = oracle::random_conv(rng, 1, 1, 3, 1, true);
  const auto y = submanifold_conv(g, w, rulebook_for(g, w, ConvMode::submanifold));
  ASSERT_EQ(y.size(), 1u);
  EXPECT_FLOAT_EQ(y.feature(0)[0], static_cast<float>(static_cast<double>(w.tap(0, 0, 1, 1)) * 0.75 + w.bias[0]));
}

TEST(SubmanifoldConv, CenterDeltaIdentity) {
  Rng rng(45);
  const auto g = oracle::random_sparse(rng, 9, 9, 3, 0.3);
  auto w = ConvWeights::zeros(3, 3, 3, 3);
  for (int c = 0; c < 3; ++c) w.tap(c, c, 1, 1) = 1.0f;
  EXPECT_EQ(submanifold_conv(g, w, rulebook_for(g, w, ConvMode::submanifold)), g);
}

TEST(SubmanifoldConv, DenseRestrictedToActive) {
  Rng rng(46);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = oracle::random_sparse(rng, rng.integer(1, 16), rng.integer(1, 16), rng.integer(1, 4), 0.3);
    const auto w = oracle::random_conv(rng, g.channels(), rng.integer(1, 4), 2 * rng.integer(0, 2) + 1, 1, true);
    const auto y = submanifold_conv(g, w, rulebook_for(g, w, ConvMode::submanifold));
    ASSERT_EQ(sites_of(y), sites_of(g));
    const auto d = oracle::conv(densify(g), w);
    const DenseGrid yd = densify(y);
    for (int r = 0; r < g.height(); ++r) {
      for (int c = 0; c < g.width(); ++c) {
        const bool active = g.find({r, c}).has_value();
        for (int k = 0; k < w.out_channels; ++k) {
          if (active) {
            EXPECT_NEAR(yd.at(r, c, k), d.at(r, c, k), 1e-5);
          } else {
            EXPECT_EQ(yd.at(r, c, k), 0.0f);
          }
        }
      }
    }
  }
}

TEST(SparseBatchNorm, IdentityAndScalar) {
  Rng rng(47);
  const auto g = oracle::random_sparse(rng, 6, 6, 2, 0.4);
  const auto y = sparse_batchnorm_infer(g, NormStats::identity(2));
  EXPECT_LE(oracle::max_abs(oracle::to_vec(y.features()), oracle::to_vec(g.features())), 1e-5);
  NormStats s{{1.0f}, {4.0f}, {2.0f}, {1.0f}, 0.0f};
  EXPECT_EQ(sparse_batchnorm_infer(SparseGrid(2, 2, 1, {{1, 0}}, {3.0f}), s).feature(0)[0], 3.0f);
  EXPECT_THROW(sparse_batchnorm_infer(g, NormStats::identity(3)), ValidationError);
}

TEST(SparseBatchNorm, DenseRestricted) {
  Rng rng(48);
  const auto g = oracle::random_sparse(rng, 7, 5, 3, 0.4);
  NormStats s;
  for (int c = 0; c < 3; ++c) {
    s.mean.push_back(static_cast<float>(rng.uniform(-1, 1)));
    s.variance.push_back(static_cast<float>(rng.uniform(0.1, 2)));
    s.scale.push_back(static_cast<float>(rng.uniform(-2, 2)));
    s.shift.push_back(static_cast<float>(rng.uniform(-1, 1)));
  }
  const auto y = sparse_batchnorm_infer(g, s);
  const DenseGrid d = batchnorm_infer(densify(g), s);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Coord c = y.sites()[i];
    for (int k = 0; k < 3; ++k) EXPECT_EQ(y.feature(i)[static_cast<std::size_t>(k)], d.at(c.row, c.col, k));
  }
}

TEST(SparseMaxPool, EmptyAndNegative) {
  EXPECT_TRUE(sparse_maxpool(SparseGrid(4, 4, 1), 2, 2).empty());
  const auto y = sparse_maxpool(SparseGrid(4, 4, 1, {{3, 2}}, {-5.0f}), 2, 2);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y.sites()[0], (Coord{1, 1}));
  EXPECT_EQ(y.feature(0)[0], -5.0f);
}

TEST(SparseMaxPool, ActiveOnlyOracle) {
  Rng rng(49);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = oracle::random_sparse(rng, rng.integer(1, 10), rng.integer(1, 10), rng.integer(1, 3), 0.3);
    const int k = rng.integer(1, 3), s = rng.integer(1, 3);
    const auto y = sparse_maxpool(g, k, s);
    const auto expect = oracle::sparse_maxpool(g, k, s);
    ASSERT_EQ(y.size(), expect.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      EXPECT_EQ(oracle::to_vec(y.feature(i)), expect.at(y.sites()[i]));
    }
  }
}

TEST(SparseMaxPool, NonNegativeMatchesDense) {
  Rng rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = oracle::random_sparse(rng, rng.integer(2, 10), rng.integer(2, 10), 2, 0.3);
    for (float& v : g.features()) v = std::fabs(v);
    const DenseGrid d = maxpool2d(densify(g), 2, 2);
    const DenseGrid y = densify(sparse_maxpool(g, 2, 2));
    EXPECT_EQ(y, d);
  }
}

TEST(SparseLeaky, Elementwise) {
  const auto y = sparse_leaky_relu(SparseGrid(2, 2, 2, {{0, 1}}, {-1.0f, 2.0f}), 0.1f);
  EXPECT_FLOAT_EQ(y.feature(0)[0], -0.1f);
  EXPECT_EQ(y.feature(0)[1], 2.0f);
}

TEST(SparseOpCount, SubmanifoldSingleSite) {
  const std::vector<Coord> in{{2, 2}};
  const auto rb = build_rulebook(in, 5, 5, 3, 3, 1, ConvMode::submanifold);
  EXPECT_EQ(sparse_conv_op_count(rb, 1, 1).multiply_accumulates, 1u);
}

TEST(SparseOpCount, EmptyInputIsZero) {
  const auto rb = build_rulebook({}, 5, 5, 3, 3, 1, ConvMode::full);
  EXPECT_EQ(sparse_conv_op_count(rb, 4, 8), OpCount{});
  EXPECT_EQ(elementwise_op_count(0, 8), OpCount{});
}

TEST(SparseOpCount, PairsTimesChannels) {
  Rng rng(51);
  const auto g = oracle::random_sparse(rng, 10, 10, 1, 0.2);
  const auto rb = build_rulebook(g.sites(), 10, 10, 3, 3, 2, ConvMode::full);
  const auto expect = brute_pairs(sites_of(g), 10, 10, 3, 2, ConvMode::full).size();
  EXPECT_EQ(sparse_conv_op_count(rb, 3, 5).multiply_accumulates, expect * 15);
}
