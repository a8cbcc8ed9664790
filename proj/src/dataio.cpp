#include "spev/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "spev/error.hpp"

namespace spev {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

class PnmReader {
 public:
  explicit PnmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) ++pos_;
    if (pos_ == start) {
      throw FormatError("pnm: malformed header");
    }
    int v = 0;
    auto* first = reinterpret_cast<const char*>(bytes_.data()) + start;
    auto [ptr, ec] = std::from_chars(first, first + (pos_ - start), v);
    if (ec != std::errc()) {
      throw FormatError("pnm: header value out of range");
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("pnm: truncated header");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

ClassTable::ClassTable()
    : ClassTable({"Car", "Van", "Truck", "Pedestrian", "Person_sitting", "Cyclist", "Tram", "Misc"},
                 "DontCare") {}

ClassTable::ClassTable(std::vector<std::string> names, std::string ignore_label)
    : names_(std::move(names)), ignore_label_(std::move(ignore_label)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n == ignore_label_ || !seen.insert(n).second) {
      throw ValidationError("class table names must be unique and exclude the ignore label");
    }
  }
}

std::optional<int> ClassTable::id_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    return std::nullopt;
  }
  return static_cast<int>(it - names_.begin());
}

std::vector<GroundTruthBox> parse_kitti_labels(std::string_view text, ImageDims dims,
                                               const ClassTable& classes) {
  std::vector<GroundTruthBox> boxes;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    const auto fields = split_ws(line);
    if (fields.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = "label line " + std::to_string(line_no);
    if (classes.ignored(fields[0])) {
      continue;
    }
    const auto class_id = classes.id_of(fields[0]);
    if (!class_id) {
      throw FormatError(where + ": unknown class '" + std::string(fields[0]) + "'");
    }
    if (fields.size() < 8) {
      throw FormatError(where + ": expected at least 8 fields, got " +
                        std::to_string(fields.size()));
    }
    double v[7];
    for (int i = 0; i < 7; ++i) {
      auto parsed = parse_double(fields[static_cast<std::size_t>(i) + 1]);
      if (!parsed) {
        throw FormatError(where + ": malformed numeric field " + std::to_string(i + 2) + " '" +
                          std::string(fields[static_cast<std::size_t>(i) + 1]) + "'");
      }
      v[i] = *parsed;
    }
    GroundTruthBox box;
    box.class_id = *class_id;
    box.xmin = std::clamp(v[3], 0.0, static_cast<double>(dims.width));
    box.ymin = std::clamp(v[4], 0.0, static_cast<double>(dims.height));
    box.xmax = std::clamp(v[5], 0.0, static_cast<double>(dims.width));
    box.ymax = std::clamp(v[6], 0.0, static_cast<double>(dims.height));
    if (!(box.xmin < box.xmax) || !(box.ymin < box.ymax)) {
      throw FormatError(where + ": box is empty after clamping to the image");
    }
    boxes.push_back(box);
    if (end == text.size()) break;
  }
  return boxes;
}

DenseGrid load_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("pnm: unsupported magic");
  }
  const bool color = bytes[1] == '6';
  PnmReader reader(bytes);
  const int width = reader.next_int();
  const int height = reader.next_int();
  const int maxval = reader.next_int();
  if (width < 1 || height < 1) {
    throw FormatError("pnm: image dimensions must be >= 1");
  }
  if (maxval < 1 || maxval > 255) {
    throw FormatError("pnm: maxval must be in [1, 255]");
  }
  const std::size_t start = reader.payload_start();
  const std::size_t samples = static_cast<std::size_t>(width) * height * (color ? 3 : 1);
  if (bytes.size() - start < samples) {
    throw FormatError("pnm: truncated payload");
  }
  DenseGrid out(height, width, 1);
  auto dst = out.values();
  const double scale = 1.0 / maxval;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (color) {
      const auto* px = bytes.data() + start + 3 * i;
      dst[i] = static_cast<float>((0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) * scale);
    } else {
      dst[i] = static_cast<float>(bytes[start + i] * scale);
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const DenseGrid& gray) {
  if (gray.channels() != 1) {
    throw ValidationError("encode_pgm expects a single-channel grid");
  }
  const std::string header =
      "P5\n" + std::to_string(gray.width()) + " " + std::to_string(gray.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float v : gray.values()) {
    const double scaled = std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
    out.push_back(static_cast<std::uint8_t>(scaled));
  }
  return out;
}

DetectionTargets encode_targets(std::span<const GroundTruthBox> boxes, int grid, int num_classes,
                                ImageDims dims) {
  if (grid < 1) {
    throw ValidationError("grid size must be >= 1");
  }
  DetectionTargets targets;
  targets.grid = grid;
  targets.num_classes = num_classes;
  targets.cells.assign(static_cast<std::size_t>(grid) * grid,
                       CellTarget{0, 0, 0, 0, 0, std::vector<float>(num_classes, 0.0f)});
  for (const auto& box : boxes) {
    if (box.class_id < 0 || box.class_id >= num_classes) {
      throw ValidationError("box class id " + std::to_string(box.class_id) + " out of range");
    }
    const double gx = (box.xmin + box.xmax) / 2.0 / dims.width * grid;
    const double gy = (box.ymin + box.ymax) / 2.0 / dims.height * grid;
    const int col = std::clamp(static_cast<int>(std::floor(gx)), 0, grid - 1);
    const int row = std::clamp(static_cast<int>(std::floor(gy)), 0, grid - 1);
    CellTarget& cell = targets.cells[static_cast<std::size_t>(row) * grid + col];
    cell.objectness = 1.0f;
    cell.cx = static_cast<float>(gx - col);
    cell.cy = static_cast<float>(gy - row);
    cell.w = static_cast<float>((box.xmax - box.xmin) / dims.width);
    cell.h = static_cast<float>((box.ymax - box.ymin) / dims.height);
    std::fill(cell.class_one_hot.begin(), cell.class_one_hot.end(), 0.0f);
    cell.class_one_hot[static_cast<std::size_t>(box.class_id)] = 1.0f;
  }
  return targets;
}

std::vector<GroundTruthBox> decode_targets(const DetectionTargets& targets, ImageDims dims) {
  std::vector<GroundTruthBox> boxes;
  for (int row = 0; row < targets.grid; ++row) {
    for (int col = 0; col < targets.grid; ++col) {
      const CellTarget& cell = targets.cell(row, col);
      if (cell.objectness <= 0.0f) continue;
      const double cx = (col + static_cast<double>(cell.cx)) / targets.grid * dims.width;
      const double cy = (row + static_cast<double>(cell.cy)) / targets.grid * dims.height;
      const double w = static_cast<double>(cell.w) * dims.width;
      const double h = static_cast<double>(cell.h) * dims.height;
      const auto best = std::max_element(cell.class_one_hot.begin(), cell.class_one_hot.end());
      boxes.push_back({static_cast<int>(best - cell.class_one_hot.begin()), cx - w / 2, cy - h / 2,
                       cx + w / 2, cy + h / 2});
    }
  }
  return boxes;
}

std::vector<DatasetEntry> discover_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::map<std::string, fs::path> images;
  std::map<std::string, fs::path> labels;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root / "images", ec)) {
    const auto ext = entry.path().extension();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
      images[entry.path().stem().string()] = entry.path();
    }
  }
  if (ec) {
    throw FormatError("cannot list " + (root / "images").string() + ": " + ec.message());
  }
  for (const auto& entry : fs::directory_iterator(root / "labels", ec)) {
    if (entry.path().extension() == ".txt") {
      labels[entry.path().stem().string()] = entry.path();
    }
  }
  if (ec) {
    throw FormatError("cannot list " + (root / "labels").string() + ": " + ec.message());
  }
  std::vector<DatasetEntry> out;
  for (const auto& [stem, image] : images) {
    auto it = labels.find(stem);
    if (it != labels.end()) {
      out.push_back({stem, image, it->second});
    }
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_sparse_grid(std::ostream& out, const SparseGrid& g) {
  out << "# " << g.height() << ' ' << g.width() << ' ' << g.channels() << '\n';
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << g.sites()[i].row << ' ' << g.sites()[i].col;
    for (float v : g.feature(i)) out << ' ' << v;
    out << '\n';
  }
}

SparseGrid read_sparse_grid(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw FormatError("sparse grid: missing header");
  std::istringstream header(line);
  std::string hash;
  int h = 0;
  int w = 0;
  int c = 0;
  std::string rest;
  if (!(header >> hash >> h >> w >> c) || hash != "#" || (header >> rest) || h < 1 || w < 1 || c < 1) {
    throw FormatError("sparse grid line 1: expected '# height width channels'");
  }
  std::vector<Coord> sites;
  std::vector<float> features;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Coord site;
    if (!(fields >> site.row >> site.col)) {
      throw FormatError("sparse grid line " + std::to_string(line_no) + ": malformed coordinates");
    }
    for (int k = 0; k < c; ++k) {
      float v = 0;
      if (!(fields >> v)) {
        throw FormatError("sparse grid line " + std::to_string(line_no) + ": expected " + std::to_string(c) +
                          " values");
      }
      features.push_back(v);
    }
    if (fields >> rest) throw FormatError("sparse grid line " + std::to_string(line_no) + ": trailing fields");
    sites.push_back(site);
  }
  try {
    return SparseGrid::from_unordered(h, w, c, std::move(sites), std::move(features));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("sparse grid: ") + e.what());
  }
}

}  // namespace spev
