#include "spev/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "spev/error.hpp"
#include "spev/random.hpp"

namespace spev {

namespace {

enum class BlockTag : std::uint8_t { conv = 1, norm = 2, linear = 3 };

constexpr char kMagic[4] = {'S', 'P', 'E', 'V'};

// Expected layout of one block for a network.
struct BlockShape {
  BlockTag tag;
  std::vector<std::uint32_t> dims;
};

std::vector<BlockShape> expected_blocks(const NetworkSpec& spec) {
  const auto io = validate(spec);
  std::vector<BlockShape> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto in_ch = static_cast<std::uint32_t>(io[i].in.channels);
    switch (l.kind) {
      case LayerKind::conv:
        out.push_back({BlockTag::conv,
                       {static_cast<std::uint32_t>(l.out), in_ch, static_cast<std::uint32_t>(l.kernel),
                        static_cast<std::uint32_t>(l.kernel)}});
        break;
      case LayerKind::batchnorm:
        out.push_back({BlockTag::norm, {in_ch}});
        break;
      case LayerKind::linear:
        out.push_back({BlockTag::linear, {static_cast<std::uint32_t>(l.out), in_ch}});
        break;
      default:
        break;
    }
  }
  return out;
}

BlockShape shape_of(const WeightBlock& block) {
  return std::visit(
      [](const auto& b) -> BlockShape {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ConvWeights>) {
          return {BlockTag::conv,
                  {static_cast<std::uint32_t>(b.out_channels), static_cast<std::uint32_t>(b.in_channels),
                   static_cast<std::uint32_t>(b.kernel_h), static_cast<std::uint32_t>(b.kernel_w)}};
        } else if constexpr (std::is_same_v<T, NormStats>) {
          return {BlockTag::norm, {static_cast<std::uint32_t>(b.channels())}};
        } else {
          return {BlockTag::linear,
                  {static_cast<std::uint32_t>(b.out_features), static_cast<std::uint32_t>(b.in_features)}};
        }
      },
      block);
}

std::string describe(const BlockShape& s) {
  std::string out = s.tag == BlockTag::conv ? "conv" : s.tag == BlockTag::norm ? "batchnorm" : "linear";
  out += "[";
  for (std::size_t i = 0; i < s.dims.size(); ++i) {
    out += (i ? "x" : "") + std::to_string(s.dims[i]);
  }
  return out + "]";
}

bool same_shape(const BlockShape& a, const BlockShape& b) { return a.tag == b.tag && a.dims == b.dims; }

WeightBlock zero_block(const BlockShape& s, const LayerSpec& layer) {
  switch (s.tag) {
    case BlockTag::conv:
      return ConvWeights::zeros(static_cast<int>(s.dims[0]), static_cast<int>(s.dims[1]),
                                static_cast<int>(s.dims[2]), static_cast<int>(s.dims[3]), layer.stride,
                                true);
    case BlockTag::norm:
      return NormStats::identity(static_cast<int>(s.dims[0]));
    case BlockTag::linear:
      return LinearWeights::zeros(static_cast<int>(s.dims[0]), static_cast<int>(s.dims[1]));
  }
  throw ValidationError("unknown block tag");
}

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
  }
  void floats(const std::vector<float>& v) {
    for (float f : v) le(std::bit_cast<std::uint32_t>(f));
  }
  void floats(float f) { le(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T le(const std::string& what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  void floats(std::vector<float>& dst, std::size_t n, const std::string& what) {
    need(n * 4, what);
    dst.resize(n);
    for (std::size_t i = 0; i < n; ++i) dst[i] = std::bit_cast<float>(le<std::uint32_t>(what));
  }
  bool done() const { return pos_ == in_.size(); }
  bool starts_with_magic() const {
    return in_.size() >= 4 && std::memcmp(in_.data(), kMagic, 4) == 0;
  }
  void skip(std::size_t n) { pos_ += n; }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError("weight file shape mismatch: truncated in " + what);
    }
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<int> block_indices(const NetworkSpec& spec) {
  std::vector<int> out;
  int next = 0;
  for (const auto& l : spec.layers) {
    const bool has_block =
        l.kind == LayerKind::conv || l.kind == LayerKind::batchnorm || l.kind == LayerKind::linear;
    out.push_back(has_block ? next++ : -1);
  }
  return out;
}

WeightStore zero_weights(const NetworkSpec& spec) {
  const auto shapes = expected_blocks(spec);
  const auto index = block_indices(spec);
  WeightStore ws;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (index[i] >= 0) ws.blocks.push_back(zero_block(shapes[static_cast<std::size_t>(index[i])], spec.layers[i]));
  }
  return ws;
}

void check_compatible(const WeightStore& ws, const NetworkSpec& spec) {
  const auto expected = expected_blocks(spec);
  const auto index = block_indices(spec);
  for (std::size_t b = 0; b < std::min(expected.size(), ws.blocks.size()); ++b) {
    const auto actual = shape_of(ws.blocks[b]);
    if (!same_shape(actual, expected[b])) {
      throw ValidationError("weight block " + std::to_string(b) + ": expected " + describe(expected[b]) +
                            ", got " + describe(actual));
    }
    std::visit([](const auto& blk) { blk.validate(); }, ws.blocks[b]);
  }
  if (expected.size() != ws.blocks.size()) {
    throw ValidationError("weight store has " + std::to_string(ws.blocks.size()) + " blocks, spec needs " +
                          std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::conv) {
      const auto& c = ws.conv(static_cast<std::size_t>(index[i]));
      if (c.stride != spec.layers[i].stride || !c.same_padding) {
        throw ValidationError("weight block " + std::to_string(index[i]) +
                              ": stride/padding differ from layer " + std::to_string(i));
      }
    }
  }
}

WeightStore random_weights(const NetworkSpec& spec, std::uint64_t seed, RandomWeightOptions options) {
  WeightStore ws = zero_weights(spec);
  Rng rng(seed);
  for (auto& block : ws.blocks) {
    if (auto* c = std::get_if<ConvWeights>(&block)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(c->in_channels * c->kernel_h * c->kernel_w));
      for (float& v : c->kernel) v = static_cast<float>(rng.uniform(-bound, bound));
      for (float& v : c->bias) v = options.zero_preserving ? 0.0f : static_cast<float>(rng.uniform(-0.1, 0.1));
    } else if (auto* n = std::get_if<NormStats>(&block)) {
      for (std::size_t ch = 0; ch < n->mean.size(); ++ch) {
        n->mean[ch] = static_cast<float>(rng.uniform(-0.2, 0.2));
        n->variance[ch] = static_cast<float>(rng.uniform(0.5, 1.5));
        n->scale[ch] = static_cast<float>(rng.uniform(0.5, 1.5));
        n->shift[ch] = static_cast<float>(rng.uniform(-0.2, 0.2));
      }
      if (options.zero_preserving) {
        // Pure per-channel scaling maps 0 to exactly 0.
        std::fill(n->mean.begin(), n->mean.end(), 0.0f);
        std::fill(n->shift.begin(), n->shift.end(), 0.0f);
      }
    } else if (auto* l = std::get_if<LinearWeights>(&block)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l->in_features));
      for (float& v : l->weight) v = static_cast<float>(rng.uniform(-bound, bound));
      for (float& v : l->bias) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
  }
  return ws;
}

std::vector<std::uint8_t> save_weights(const WeightStore& ws, const NetworkSpec& spec) {
  check_compatible(ws, spec);
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.le<std::uint16_t>(kWeightFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ws.blocks.size()));
  for (const auto& block : ws.blocks) {
    const auto shape = shape_of(block);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.tag));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(shape.dims.size()));
    for (auto d : shape.dims) w.le<std::uint32_t>(d);
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, ConvWeights>) {
            w.floats(b.kernel);
            w.floats(b.bias);
          } else if constexpr (std::is_same_v<T, NormStats>) {
            w.floats(b.mean);
            w.floats(b.variance);
            w.floats(b.scale);
            w.floats(b.shift);
            w.floats(b.epsilon);
          } else {
            w.floats(b.weight);
            w.floats(b.bias);
          }
        },
        block);
  }
  return w.take();
}

WeightStore load_weights(std::span<const std::uint8_t> bytes, const NetworkSpec& spec) {
  ByteReader r(bytes);
  if (!r.starts_with_magic()) {
    throw FormatError("weight file: bad magic (expected SPEV)");
  }
  r.skip(4);
  const auto version = r.le<std::uint16_t>("header");
  if (version != kWeightFormatVersion) {
    throw FormatError("weight file: unsupported version " + std::to_string(version));
  }
  const auto expected = expected_blocks(spec);
  const auto count = r.le<std::uint32_t>("header");
  if (count != expected.size()) {
    throw FormatError("weight file shape mismatch: " + std::to_string(count) + " blocks, spec needs " +
                      std::to_string(expected.size()));
  }
  WeightStore ws = zero_weights(spec);
  for (std::size_t b = 0; b < expected.size(); ++b) {
    const std::string where = "block " + std::to_string(b);
    BlockShape actual;
    actual.tag = static_cast<BlockTag>(r.le<std::uint8_t>(where));
    const auto rank = r.le<std::uint8_t>(where);
    for (int i = 0; i < rank; ++i) actual.dims.push_back(r.le<std::uint32_t>(where));
    if (!same_shape(actual, expected[b])) {
      throw FormatError("weight file shape mismatch at " + where + ": expected " + describe(expected[b]) +
                        ", got " + describe(actual));
    }
    std::visit(
        [&](auto& blk) {
          using T = std::decay_t<decltype(blk)>;
          if constexpr (std::is_same_v<T, ConvWeights>) {
            r.floats(blk.kernel, blk.kernel.size(), where);
            r.floats(blk.bias, blk.bias.size(), where);
          } else if constexpr (std::is_same_v<T, NormStats>) {
            const auto n = blk.mean.size();
            r.floats(blk.mean, n, where);
            r.floats(blk.variance, n, where);
            r.floats(blk.scale, n, where);
            r.floats(blk.shift, n, where);
            std::vector<float> eps;
            r.floats(eps, 1, where);
            blk.epsilon = eps[0];
          } else {
            r.floats(blk.weight, blk.weight.size(), where);
            r.floats(blk.bias, blk.bias.size(), where);
          }
        },
        ws.blocks[b]);
  }
  if (!r.done()) {
    throw FormatError("weight file shape mismatch: trailing bytes after the last block");
  }
  try {
    check_compatible(ws, spec);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("weight file: ") + e.what());
  }
  return ws;
}

}  // namespace spev
