#pragma once

#include <span>
#include <vector>

#include "spev/dataio.hpp"
#include "spev/network.hpp"

namespace spev {

struct Detection {
  int class_id = 0;
  double score = 0;
  double xmin = 0;
  double ymin = 0;
  double xmax = 0;
  double ymax = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct BoxCorners {
  double xmin = 0;
  double ymin = 0;
  double xmax = 0;
  double ymax = 0;
};

// Intersection over union; 0 when either box is empty.
double iou(const BoxCorners& a, const BoxCorners& b);
inline BoxCorners corners(const Detection& d) { return {d.xmin, d.ymin, d.xmax, d.ymax}; }
inline BoxCorners corners(const GroundTruthBox& g) { return {g.xmin, g.ymin, g.xmax, g.ymax}; }

// Raw head layout, per cell in row-major cell order: B boxes of
// (cx, cy, w, h, confidence), then C class scores. cx, cy are offsets inside
// the cell; w, h are relative to the image.
inline std::size_t box_offset(const HeadSpec& h, int cell, int box) {
  return static_cast<std::size_t>(cell) * h.values_per_cell() + static_cast<std::size_t>(box) * 5;
}
inline std::size_t class_offset(const HeadSpec& h, int cell) {
  return static_cast<std::size_t>(cell) * h.values_per_cell() + static_cast<std::size_t>(h.boxes) * 5;
}

// Confidence and class scores are clamped to [0, 1]; the score is
// confidence * max class score with the lowest class index winning ties.
// Boxes with non-positive width or height are never emitted.
// Throws ValidationError if raw.size() != head.outputs().
std::vector<Detection> decode(std::span<const float> raw, const HeadSpec& head, double conf_threshold,
                              ImageDims dims);

// Per-class greedy suppression of boxes with IoU > iou_threshold against an
// already kept box. Output ordered by descending score, then class_id, xmin,
// ymin.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

// Raw vector that reproduces `targets` exactly: box 0 carries the target with
// confidence 1, every other value is zero.
std::vector<float> targets_to_raw(const DetectionTargets& targets, const HeadSpec& head);

inline constexpr double kLambdaCoord = 5.0;
inline constexpr double kLambdaNoObj = 0.5;

// Sum-squared YOLO-v1 loss. Object cells: the predictor with the highest IoU
// against the target (lowest index on ties) is responsible and pays
// kLambdaCoord on (cx, cy, sqrt w, sqrt h) plus (conf - 1)^2; the others pay
// kLambdaNoObj * conf^2; class scores pay their squared error. Empty cells pay
// kLambdaNoObj * conf^2 for every predictor. Square roots are sign-preserving
// so negative predicted sizes stay finite.
double yolo_loss(std::span<const float> raw, const DetectionTargets& targets, const HeadSpec& head);

struct ClassAp {
  int class_id = 0;
  int ground_truths = 0;
  double ap = 0;
};

struct MapResult {
  std::vector<ClassAp> per_class;  // one entry per class id
  double map = 0;                  // mean over classes with at least one ground truth
};

// detections[i] and ground_truth[i] belong to sample i. Within a class,
// detections are taken by descending score (ties by sample, then input
// order) and matched to the unmatched ground truth of the same sample with
// the highest IoU >= iou_threshold. AP is the area under the precision-recall
// curve with precision made non-increasing from the right.
MapResult evaluate_map(std::span<const std::vector<Detection>> detections,
                       std::span<const std::vector<GroundTruthBox>> ground_truth, int num_classes,
                       double iou_threshold = 0.5);

}  // namespace spev
