#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "spev/dense_layers.hpp"
#include "spev/tensor.hpp"

namespace spev {

enum class LayerKind { conv, batchnorm, maxpool, leaky_relu, sparse_to_dense, flatten, linear };

std::string_view to_string(LayerKind kind);

// One line of a network spec. Only the fields relevant to `kind` are used:
// conv (out, kernel, stride), maxpool (kernel, stride), leaky_relu (alpha),
// linear (out).
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int out = 0;
  int kernel = 1;
  int stride = 1;
  float alpha = kDefaultLeakySlope;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// YOLO-v1 head: grid x grid cells, `boxes` boxes of 5 values per cell and
// `classes` class scores per cell.
struct HeadSpec {
  int grid = 7;
  int boxes = 2;
  int classes = 8;

  int values_per_cell() const { return boxes * 5 + classes; }
  int outputs() const { return grid * grid * values_per_cell(); }
  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

struct NetworkSpec {
  Shape input{64, 64, 2};
  std::vector<LayerSpec> layers;
  HeadSpec head;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Input and output shape of one layer. Flat tensors are {1, 1, n}.
struct LayerIO {
  Shape in;
  Shape out;
  bool flat_in = false;
  bool flat_out = false;
};

// Runs the shape chain; throws ValidationError naming the offending layer
// index. Requires exactly one sparse_to_dense after every conv, batchnorm
// and maxpool, flatten after it, and a final flat output of head.outputs().
std::vector<LayerIO> validate(const NetworkSpec& spec);

// Line-oriented text: `input h=64 w=64 c=2`, `conv out=16 k=3 s=1`,
// `batchnorm`, `leaky_relu alpha=0.1`, `maxpool k=2 s=2`, `sparse_to_dense`,
// `flatten`, `linear out=882`, `head S=7 B=2 C=8`. '#' starts a comment.
// Throws FormatError with the line number; the result is validated.
NetworkSpec parse_network_spec(std::string_view text);
std::string format_network_spec(const NetworkSpec& spec);

}  // namespace spev
