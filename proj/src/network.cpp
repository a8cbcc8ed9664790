#include "spev/network.hpp"

#include <charconv>
#include <map>
#include <optional>
#include <sstream>

#include "spev/error.hpp"

namespace spev {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::sparse_to_dense: return "sparse_to_dense";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

std::vector<LayerIO> validate(const NetworkSpec& spec) {
  if (spec.input.height < 1 || spec.input.width < 1 || spec.input.channels < 1) {
    throw ValidationError("network input dimensions must be >= 1");
  }
  if (spec.head.grid < 1 || spec.head.boxes < 1 || spec.head.classes < 1) {
    throw ValidationError("head S, B and C must be >= 1");
  }
  std::vector<LayerIO> io;
  io.reserve(spec.layers.size());
  Shape cur = spec.input;
  bool flat = false;
  bool dense_tail = false;
  int to_dense_count = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + "): ";
    LayerIO step{cur, cur, flat, flat};
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::maxpool: {
        if (dense_tail) throw ValidationError(where + "spatial layer after sparse_to_dense");
        if (l.kernel < 1 || l.stride < 1) throw ValidationError(where + "k and s must be >= 1");
        if (l.kind == LayerKind::conv && l.out < 1) throw ValidationError(where + "out must be >= 1");
        const auto rows = same_padding(cur.height, l.kernel, l.stride);
        const auto cols = same_padding(cur.width, l.kernel, l.stride);
        step.out = {rows.out_extent, cols.out_extent,
                    l.kind == LayerKind::conv ? l.out : cur.channels};
        break;
      }
      case LayerKind::batchnorm:
        if (dense_tail) throw ValidationError(where + "spatial layer after sparse_to_dense");
        break;
      case LayerKind::leaky_relu:
        if (!(l.alpha >= 0.0f)) throw ValidationError(where + "alpha must be non-negative");
        break;
      case LayerKind::sparse_to_dense:
        if (++to_dense_count > 1) throw ValidationError(where + "more than one sparse_to_dense");
        dense_tail = true;
        break;
      case LayerKind::flatten:
        if (!dense_tail) throw ValidationError(where + "flatten before sparse_to_dense");
        if (flat) throw ValidationError(where + "input is already flat");
        step.out = {1, 1, static_cast<int>(cur.size())};
        step.flat_out = true;
        break;
      case LayerKind::linear:
        if (!flat) throw ValidationError(where + "linear needs a flat input (add flatten)");
        if (l.out < 1) throw ValidationError(where + "out must be >= 1");
        step.out = {1, 1, l.out};
        break;
    }
    cur = step.out;
    flat = step.flat_out;
    io.push_back(step);
  }
  if (to_dense_count != 1) {
    throw ValidationError("network needs exactly one sparse_to_dense layer");
  }
  if (!flat || cur.channels != spec.head.outputs()) {
    throw ValidationError("last layer must emit S*S*(B*5+C) = " +
                          std::to_string(spec.head.outputs()) + " flat values, got " +
                          std::to_string(cur.size()));
  }
  return io;
}

namespace {

struct ParsedLine {
  std::string keyword;
  std::map<std::string, std::string> args;
};

int int_arg(const ParsedLine& p, const std::string& key, int line_no, std::optional<int> fallback = {}) {
  auto it = p.args.find(key);
  if (it == p.args.end()) {
    if (fallback) return *fallback;
    throw FormatError("spec line " + std::to_string(line_no) + ": " + p.keyword + " needs " + key + "=");
  }
  int v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("spec line " + std::to_string(line_no) + ": " + key + "=" + s + " is not an integer");
  }
  return v;
}

float float_arg(const ParsedLine& p, const std::string& key, int line_no, float fallback) {
  auto it = p.args.find(key);
  if (it == p.args.end()) return fallback;
  float v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("spec line " + std::to_string(line_no) + ": " + key + "=" + s + " is not a number");
  }
  return v;
}

void expect_keys(const ParsedLine& p, std::initializer_list<const char*> allowed, int line_no) {
  for (const auto& [k, v] : p.args) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) {
      throw FormatError("spec line " + std::to_string(line_no) + ": unknown key '" + k + "' for " + p.keyword);
    }
  }
}

}  // namespace

NetworkSpec parse_network_spec(std::string_view text) {
  NetworkSpec spec;
  spec.layers.clear();
  bool have_input = false;
  bool have_head = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    ParsedLine p;
    if (!(tokens >> p.keyword)) continue;
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size()) {
        throw FormatError("spec line " + std::to_string(line_no) + ": expected key=value, got '" + tok + "'");
      }
      p.args[tok.substr(0, eq)] = tok.substr(eq + 1);
    }

    LayerSpec l;
    if (p.keyword == "input") {
      expect_keys(p, {"h", "w", "c"}, line_no);
      spec.input = {int_arg(p, "h", line_no), int_arg(p, "w", line_no), int_arg(p, "c", line_no, 2)};
      have_input = true;
      continue;
    }
    if (p.keyword == "head") {
      expect_keys(p, {"S", "B", "C"}, line_no);
      spec.head = {int_arg(p, "S", line_no), int_arg(p, "B", line_no), int_arg(p, "C", line_no)};
      have_head = true;
      continue;
    }
    if (p.keyword == "conv") {
      expect_keys(p, {"out", "k", "s"}, line_no);
      l = {LayerKind::conv, int_arg(p, "out", line_no), int_arg(p, "k", line_no),
           int_arg(p, "s", line_no, 1)};
    } else if (p.keyword == "maxpool") {
      expect_keys(p, {"k", "s"}, line_no);
      l.kind = LayerKind::maxpool;
      l.kernel = int_arg(p, "k", line_no);
      l.stride = int_arg(p, "s", line_no, l.kernel);
    } else if (p.keyword == "batchnorm") {
      expect_keys(p, {}, line_no);
      l.kind = LayerKind::batchnorm;
    } else if (p.keyword == "leaky_relu") {
      expect_keys(p, {"alpha"}, line_no);
      l.kind = LayerKind::leaky_relu;
      l.alpha = float_arg(p, "alpha", line_no, kDefaultLeakySlope);
    } else if (p.keyword == "sparse_to_dense") {
      expect_keys(p, {}, line_no);
      l.kind = LayerKind::sparse_to_dense;
    } else if (p.keyword == "flatten") {
      expect_keys(p, {}, line_no);
      l.kind = LayerKind::flatten;
    } else if (p.keyword == "linear") {
      expect_keys(p, {"out"}, line_no);
      l.kind = LayerKind::linear;
      l.out = int_arg(p, "out", line_no);
    } else {
      throw FormatError("spec line " + std::to_string(line_no) + ": unknown layer '" + p.keyword + "'");
    }
    spec.layers.push_back(l);
  }
  if (!have_input) throw FormatError("network spec has no 'input' line");
  if (!have_head) throw FormatError("network spec has no 'head' line");
  validate(spec);
  return spec;
}

std::string format_network_spec(const NetworkSpec& spec) {
  std::ostringstream out;
  out << "input h=" << spec.input.height << " w=" << spec.input.width << " c=" << spec.input.channels << '\n';
  for (const auto& l : spec.layers) {
    out << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::conv: out << " out=" << l.out << " k=" << l.kernel << " s=" << l.stride; break;
      case LayerKind::maxpool: out << " k=" << l.kernel << " s=" << l.stride; break;
      case LayerKind::leaky_relu: out << " alpha=" << l.alpha; break;
      case LayerKind::linear: out << " out=" << l.out; break;
      default: break;
    }
    out << '\n';
  }
  out << "head S=" << spec.head.grid << " B=" << spec.head.boxes << " C=" << spec.head.classes << '\n';
  return out.str();
}

}  // namespace spev
