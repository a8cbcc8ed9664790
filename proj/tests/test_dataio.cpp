#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "spev/dataio.hpp"
#include "spev/error.hpp"
#include "spev/random.hpp"

using namespace spev;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Kitti, DirectFieldMapping) {
  const auto boxes = parse_kitti_labels("Car 0.00 0 -1.58 100.0 50.0 200.0 150.0 1.5 1.6 3.9 1 2 3 -1.5\n",
                                        {1242, 375});
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(ClassTable().name_of(boxes[0].class_id), "Car");
  EXPECT_EQ(boxes[0].xmin, 100.0);
  EXPECT_EQ(boxes[0].ymin, 50.0);
  EXPECT_EQ(boxes[0].xmax, 200.0);
  EXPECT_EQ(boxes[0].ymax, 150.0);
}

TEST(Kitti, DontCareIgnored) {
  EXPECT_TRUE(parse_kitti_labels("DontCare -1 -1 -10 503.9 169.7 590.7 190.0 -1 -1 -1 -1000 -1000 -1000 -10\n",
                                 {1242, 375})
                  .empty());
}

TEST(Kitti, MalformedNumberNamesLine) {
  const auto msg = error_of([] { parse_kitti_labels("Car a b c d e f g\n", {100, 100}); });
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
  const auto unknown = error_of([] { parse_kitti_labels("Car 0 0 0 1 1 5 5\nBoat 0 0 0 1 1 2 2\n", {10, 10}); });
  EXPECT_NE(unknown.find("line 2"), std::string::npos) << unknown;
}

TEST(Kitti, ClampsToImage) {
  const auto boxes = parse_kitti_labels("Cyclist 0 0 0 -4.5 10 120 60\n", {100, 50});
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].xmin, 0.0);
  EXPECT_EQ(boxes[0].xmax, 100.0);
  EXPECT_EQ(boxes[0].ymax, 50.0);
  EXPECT_THROW(parse_kitti_labels("Car 0 0 0 120 10 140 20\n", {100, 50}), FormatError);
}

TEST(Kitti, CustomClassTable) {
  const ClassTable t({"a", "b"}, "skip");
  EXPECT_EQ(t.id_of("b"), 1);
  EXPECT_FALSE(t.id_of("c").has_value());
  EXPECT_EQ(parse_kitti_labels("skip 0 0 0 1 1 2 2\nb 0 0 0 1 1 2 2\n", {4, 4}, t).at(0).class_id, 1);
  EXPECT_THROW(ClassTable({"a", "a"}, "x"), ValidationError);
}

TEST(Pnm, P5Scaling) {
  const auto g = load_pnm(bytes_of("P5\n2 2\n255\n", {0, 255, 128, 64}));
  ASSERT_EQ(g.shape(), (Shape{2, 2, 1}));
  EXPECT_FLOAT_EQ(g.at(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(g.at(0, 1, 0), 1.0f);
  EXPECT_FLOAT_EQ(g.at(1, 0, 0), 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(g.at(1, 1, 0), 64.0f / 255.0f);
}

TEST(Pnm, P6Luma) {
  const auto g = load_pnm(bytes_of("P6\n1 1\n255\n", {255, 0, 0}));
  EXPECT_NEAR(g.at(0, 0, 0), 0.299, 1e-6);
}

TEST(Pnm, Errors) {
  EXPECT_NE(error_of([] { load_pnm(bytes_of("P7\n1 1\n255\n", {0})); }).find("unsupported magic"),
            std::string::npos);
  EXPECT_THROW(load_pnm(bytes_of("P5\n2 2\n255\n", {0, 1, 2})), FormatError);
  EXPECT_THROW(load_pnm(bytes_of("P5\n1 1\n256\n", {0})), FormatError);
  EXPECT_THROW(load_pnm(bytes_of("P5\n1 1\n0\n", {0})), FormatError);
}

TEST(Pnm, CommentAndRoundtrip) {
  const auto g = load_pnm(bytes_of("P5\n# hi\n1 2\n15\n", {15, 0}));
  EXPECT_FLOAT_EQ(g.at(0, 0, 0), 1.0f);
  const auto again = load_pnm(encode_pgm(g));
  EXPECT_EQ(again, g);
}

TEST(Targets, CenterAtHalfGoesToHigherCell) {
  const std::vector<GroundTruthBox> boxes{{2, 25, 25, 75, 75}};
  const auto t = encode_targets(boxes, 2, 8, {100, 100});
  const auto& c = t.cell(1, 1);
  EXPECT_EQ(c.objectness, 1.0f);
  EXPECT_EQ(c.cx, 0.0f);
  EXPECT_EQ(c.cy, 0.0f);
  EXPECT_FLOAT_EQ(c.w, 0.5f);
  EXPECT_EQ(c.class_one_hot[2], 1.0f);
  for (int r = 0; r < 2; ++r) {
    for (int col = 0; col < 2; ++col) {
      if (r != 1 || col != 1) EXPECT_EQ(t.cell(r, col).objectness, 0.0f);
    }
  }
}

TEST(Targets, NoBoxesAllZero) {
  const auto t = encode_targets({}, 7, 8, {448, 448});
  ASSERT_EQ(t.cells.size(), 49u);
  for (const auto& c : t.cells) {
    EXPECT_EQ(c.objectness, 0.0f);
    EXPECT_EQ(c.w, 0.0f);
    for (float v : c.class_one_hot) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Targets, MatchesCellAssignmentOracle) {
  Rng rng(31);
  const ImageDims dims{320, 240};
  for (int trial = 0; trial < 100; ++trial) {
    const double x0 = rng.uniform(0, 300), y0 = rng.uniform(0, 220);
    const GroundTruthBox b{rng.integer(0, 7), x0, y0, rng.uniform(x0 + 1, 320), rng.uniform(y0 + 1, 240)};
    const std::vector<GroundTruthBox> boxes{b};
    const auto t = encode_targets(boxes, 7, 8, dims);
    const auto [row, col] = oracle::center_cell(b, 7, 320, 240);
    const auto& c = t.cell(row, col);
    ASSERT_EQ(c.objectness, 1.0f);
    EXPECT_NEAR(c.cx, (b.xmin + b.xmax) / 2 / 320 * 7 - col, 1e-6);
    EXPECT_NEAR(c.cy, (b.ymin + b.ymax) / 2 / 240 * 7 - row, 1e-6);
    EXPECT_NEAR(c.h, (b.ymax - b.ymin) / 240, 1e-6);
    EXPECT_EQ(c.class_one_hot[static_cast<std::size_t>(b.class_id)], 1.0f);
    const auto back = decode_targets(t, dims);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_NEAR(back[0].xmin, b.xmin, 1e-3);
    EXPECT_NEAR(back[0].ymax, b.ymax, 1e-3);
  }
}

TEST(Targets, LastBoxWinsCollision) {
  const std::vector<GroundTruthBox> boxes{{0, 10, 10, 20, 20}, {3, 12, 12, 18, 18}};
  const auto t = encode_targets(boxes, 2, 8, {100, 100});
  EXPECT_EQ(t.cell(0, 0).class_one_hot[3], 1.0f);
  EXPECT_EQ(t.cell(0, 0).class_one_hot[0], 0.0f);
}

TEST(SparseGridText, RoundtripIsExact) {
  Rng rng(37);
  const auto g = oracle::random_sparse(rng, 9, 11, 3, 0.3);
  std::stringstream ss;
  write_sparse_grid(ss, g);
  EXPECT_EQ(read_sparse_grid(ss), g);
}

TEST(SparseGridText, BadLineNamed) {
  std::istringstream in("# 2 2 1\n0 0 1.5\n1 q 2\n");
  const auto msg = error_of([&] { read_sparse_grid(in); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Dataset, DiscoverPairsByStem) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "spev_dataset_test";
  fs::remove_all(root);
  fs::create_directories(root / "images");
  fs::create_directories(root / "labels");
  for (const char* f : {"images/b.pgm", "images/a.ppm", "images/c.pgm", "labels/a.txt", "labels/b.txt",
                        "labels/d.txt"}) {
    std::ofstream(root / f) << "x";
  }
  const auto entries = discover_dataset(root);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].stem, "a");
  EXPECT_EQ(entries[1].stem, "b");
  fs::remove_all(root);
  EXPECT_THROW(discover_dataset(root), FormatError);
}
