#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spev/tensor.hpp"

namespace spev {

struct ImageDims {
  int width = 0;
  int height = 0;
};

// Axis-aligned box in pixels, min inclusive, max exclusive.
struct GroundTruthBox {
  int class_id = 0;
  double xmin = 0;
  double ymin = 0;
  double xmax = 0;
  double ymax = 0;
};

class ClassTable {
 public:
  // The eight KITTI evaluation classes, DontCare ignored.
  ClassTable();
  ClassTable(std::vector<std::string> names, std::string ignore_label);

  std::optional<int> id_of(std::string_view name) const;
  const std::string& name_of(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  bool ignored(std::string_view name) const { return name == ignore_label_; }

 private:
  std::vector<std::string> names_;
  std::string ignore_label_;
};

// One box per non-ignored line, taken from fields 5-8 (left top right bottom)
// and clamped to the image. Throws FormatError naming the 1-based line.
std::vector<GroundTruthBox> parse_kitti_labels(std::string_view text, ImageDims dims,
                                               const ClassTable& classes = ClassTable());

// Binary P5 / P6 with maxval in [1, 255]; colour is reduced with
// 0.299 R + 0.587 G + 0.114 B. Output is one channel scaled to [0, 1].
DenseGrid load_pnm(std::span<const std::uint8_t> bytes);
// P5, maxval 255, values rounded and clamped.
std::vector<std::uint8_t> encode_pgm(const DenseGrid& gray);

struct CellTarget {
  float objectness = 0;
  float cx = 0;  // center offset inside the cell, [0, 1)
  float cy = 0;
  float w = 0;   // size relative to the image, (0, 1]
  float h = 0;
  std::vector<float> class_one_hot;
};

struct DetectionTargets {
  int grid = 0;
  int num_classes = 0;
  std::vector<CellTarget> cells;  // grid x grid, row-major

  const CellTarget& cell(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * grid + col];
  }
};

// Assigns each box to the cell holding its center; a later box replaces an
// earlier one in the same cell.
DetectionTargets encode_targets(std::span<const GroundTruthBox> boxes, int grid, int num_classes,
                                ImageDims dims);

// Inverse of encode_targets for the boxes that survived collisions.
std::vector<GroundTruthBox> decode_targets(const DetectionTargets& targets, ImageDims dims);

struct DatasetEntry {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path label;
};

// Pairs `images/<stem>.{pgm,ppm,pnm}` with `labels/<stem>.txt`, sorted by stem.
// Stems present on only one side are skipped.
std::vector<DatasetEntry> discover_dataset(const std::filesystem::path& root);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

// Sparse grid text: `# height width channels`, then one `row col v...` line
// per active site in canonical order. Values round-trip exactly.
void write_sparse_grid(std::ostream& out, const SparseGrid& g);
// Throws FormatError naming the 1-based line.
SparseGrid read_sparse_grid(std::istream& in);

}  // namespace spev
