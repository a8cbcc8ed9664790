#include "spev/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "spev/error.hpp"

namespace spev {

double iou(const BoxCorners& a, const BoxCorners& b) {
  const double aw = a.xmax - a.xmin;
  const double ah = a.ymax - a.ymin;
  const double bw = b.xmax - b.xmin;
  const double bh = b.ymax - b.ymin;
  if (!(aw > 0 && ah > 0 && bw > 0 && bh > 0)) return 0.0;
  const double iw = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double ih = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (aw * ah + bw * bh - inter);
}

namespace {

void check_raw(std::span<const float> raw, const HeadSpec& head, const char* op) {
  if (head.grid < 1 || head.boxes < 1 || head.classes < 1) {
    throw ValidationError(std::string(op) + ": S, B and C must be >= 1");
  }
  if (raw.size() != static_cast<std::size_t>(head.outputs())) {
    throw ValidationError(std::string(op) + ": raw output has " + std::to_string(raw.size()) +
                          " values, head expects " + std::to_string(head.outputs()));
  }
}

double unit(float v) { return std::clamp(static_cast<double>(v), 0.0, 1.0); }

double signed_sqrt(double v) { return v < 0 ? -std::sqrt(-v) : std::sqrt(v); }

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.class_id, a.xmin, a.ymin) < std::tie(b.class_id, b.xmin, b.ymin);
}

}  // namespace

std::vector<Detection> decode(std::span<const float> raw, const HeadSpec& head, double conf_threshold,
                              ImageDims dims) {
  check_raw(raw, head, "decode");
  std::vector<Detection> out;
  const int s = head.grid;
  for (int row = 0; row < s; ++row) {
    for (int col = 0; col < s; ++col) {
      const int cell = row * s + col;
      const auto cls = class_offset(head, cell);
      int best = 0;
      for (int c = 1; c < head.classes; ++c) {
        if (unit(raw[cls + static_cast<std::size_t>(c)]) > unit(raw[cls + static_cast<std::size_t>(best)])) best = c;
      }
      const double class_prob = unit(raw[cls + static_cast<std::size_t>(best)]);
      for (int b = 0; b < head.boxes; ++b) {
        const auto o = box_offset(head, cell, b);
        const double w = static_cast<double>(raw[o + 2]) * dims.width;
        const double h = static_cast<double>(raw[o + 3]) * dims.height;
        if (!(w > 0 && h > 0)) continue;
        const double score = unit(raw[o + 4]) * class_prob;
        if (score < conf_threshold) continue;
        const double cx = (col + static_cast<double>(raw[o])) / s * dims.width;
        const double cy = (row + static_cast<double>(raw[o + 1])) / s * dims.height;
        out.push_back({best, score, cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
      }
    }
  }
  return out;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Detection> sorted(dets.begin(), dets.end());
  std::stable_sort(sorted.begin(), sorted.end(), ranks_before);
  std::vector<Detection> kept;
  for (const Detection& d : sorted) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(corners(k), corners(d)) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<float> targets_to_raw(const DetectionTargets& targets, const HeadSpec& head) {
  if (targets.grid != head.grid || targets.num_classes != head.classes) {
    throw ValidationError("targets_to_raw: targets do not match the head grid or class count");
  }
  std::vector<float> raw(static_cast<std::size_t>(head.outputs()), 0.0f);
  for (int cell = 0; cell < head.grid * head.grid; ++cell) {
    const CellTarget& t = targets.cells[static_cast<std::size_t>(cell)];
    if (t.objectness <= 0) continue;
    const auto o = box_offset(head, cell, 0);
    raw[o] = t.cx;
    raw[o + 1] = t.cy;
    raw[o + 2] = t.w;
    raw[o + 3] = t.h;
    raw[o + 4] = 1.0f;
    std::copy(t.class_one_hot.begin(), t.class_one_hot.end(),
              raw.begin() + static_cast<std::ptrdiff_t>(class_offset(head, cell)));
  }
  return raw;
}

double yolo_loss(std::span<const float> raw, const DetectionTargets& targets, const HeadSpec& head) {
  check_raw(raw, head, "yolo_loss");
  if (targets.grid != head.grid || targets.num_classes != head.classes ||
      targets.cells.size() != static_cast<std::size_t>(head.grid) * head.grid) {
    throw ValidationError("yolo_loss: targets do not match the head grid or class count");
  }
  const int s = head.grid;
  double loss = 0.0;
  for (int row = 0; row < s; ++row) {
    for (int col = 0; col < s; ++col) {
      const int cell = row * s + col;
      const CellTarget& t = targets.cells[static_cast<std::size_t>(cell)];
      if (t.objectness <= 0) {
        for (int b = 0; b < head.boxes; ++b) {
          const double conf = raw[box_offset(head, cell, b) + 4];
          loss += kLambdaNoObj * conf * conf;
        }
        continue;
      }
      // Boxes in image-relative units for the responsibility test.
      auto rel_box = [&](double cx, double cy, double w, double h) {
        const double x = (col + cx) / s;
        const double y = (row + cy) / s;
        return BoxCorners{x - w / 2, y - h / 2, x + w / 2, y + h / 2};
      };
      const BoxCorners truth = rel_box(t.cx, t.cy, t.w, t.h);
      int responsible = 0;
      double best_iou = -1.0;
      for (int b = 0; b < head.boxes; ++b) {
        const auto o = box_offset(head, cell, b);
        const double v = iou(rel_box(raw[o], raw[o + 1], raw[o + 2], raw[o + 3]), truth);
        if (v > best_iou) {
          best_iou = v;
          responsible = b;
        }
      }
      for (int b = 0; b < head.boxes; ++b) {
        const auto o = box_offset(head, cell, b);
        const double conf = raw[o + 4];
        if (b != responsible) {
          loss += kLambdaNoObj * conf * conf;
          continue;
        }
        const double dx = raw[o] - static_cast<double>(t.cx);
        const double dy = raw[o + 1] - static_cast<double>(t.cy);
        const double dw = signed_sqrt(raw[o + 2]) - signed_sqrt(t.w);
        const double dh = signed_sqrt(raw[o + 3]) - signed_sqrt(t.h);
        loss += kLambdaCoord * (dx * dx + dy * dy + dw * dw + dh * dh);
        loss += (conf - 1.0) * (conf - 1.0);
      }
      const auto cls = class_offset(head, cell);
      for (int c = 0; c < head.classes; ++c) {
        const double target = static_cast<std::size_t>(c) < t.class_one_hot.size()
                                  ? t.class_one_hot[static_cast<std::size_t>(c)]
                                  : 0.0;
        const double d = raw[cls + static_cast<std::size_t>(c)] - target;
        loss += d * d;
      }
    }
  }
  return loss;
}

MapResult evaluate_map(std::span<const std::vector<Detection>> detections,
                       std::span<const std::vector<GroundTruthBox>> ground_truth, int num_classes,
                       double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    throw ValidationError("evaluate_map: " + std::to_string(detections.size()) + " prediction sets for " +
                          std::to_string(ground_truth.size()) + " ground-truth sets");
  }
  if (num_classes < 1) throw ValidationError("evaluate_map: num_classes must be >= 1");
  MapResult result;
  double sum = 0.0;
  int counted = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    struct Ranked {
      std::size_t sample;
      std::size_t index;
      const Detection* det;
    };
    std::vector<Ranked> ranked;
    std::vector<std::vector<const GroundTruthBox*>> gts(ground_truth.size());
    int total_gt = 0;
    for (std::size_t s = 0; s < ground_truth.size(); ++s) {
      for (const auto& g : ground_truth[s]) {
        if (g.class_id == cls) {
          gts[s].push_back(&g);
          ++total_gt;
        }
      }
      for (std::size_t i = 0; i < detections[s].size(); ++i) {
        if (detections[s][i].class_id == cls) ranked.push_back({s, i, &detections[s][i]});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.det->score > b.det->score; });

    ClassAp entry{cls, total_gt, 0.0};
    if (total_gt > 0) {
      std::vector<std::vector<bool>> used(ground_truth.size());
      for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), false);
      std::vector<double> precision;
      std::vector<double> recall;
      int tp = 0;
      int fp = 0;
      for (const Ranked& r : ranked) {
        int best = -1;
        double best_iou = iou_threshold;
        for (std::size_t g = 0; g < gts[r.sample].size(); ++g) {
          if (used[r.sample][g]) continue;
          const double v = iou(corners(*r.det), corners(*gts[r.sample][g]));
          if (v >= best_iou && (best < 0 || v > best_iou)) {
            best = static_cast<int>(g);
            best_iou = v;
          }
        }
        if (best >= 0) {
          used[r.sample][static_cast<std::size_t>(best)] = true;
          ++tp;
        } else {
          ++fp;
        }
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / total_gt);
      }
      for (std::size_t k = precision.size(); k-- > 1;) {
        precision[k - 1] = std::max(precision[k - 1], precision[k]);
      }
      double prev_recall = 0.0;
      for (std::size_t k = 0; k < precision.size(); ++k) {
        entry.ap += (recall[k] - prev_recall) * precision[k];
        prev_recall = recall[k];
      }
      sum += entry.ap;
      ++counted;
    }
    result.per_class.push_back(entry);
  }
  result.map = counted > 0 ? sum / counted : 0.0;
  return result;
}

}  // namespace spev
