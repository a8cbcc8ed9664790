#pragma once

// Reference implementations for tests. Each is a direct transcription of the
// defining formula, written without calling the code under test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "spev/dataio.hpp"
#include "spev/dense_layers.hpp"
#include "spev/detection.hpp"
#include "spev/events.hpp"
#include "spev/network.hpp"
#include "spev/random.hpp"
#include "spev/tensor.hpp"

namespace oracle {

using spev::Coord;
using spev::DenseGrid;

// 'same' window placement: out = ceil(in / s); pad total as needed for the
// last window, odd remainder after.
struct Axis {
  int out;
  int before;
};

inline Axis same_axis(int in, int k, int s) {
  const int out = (in + s - 1) / s;
  const int need = (out - 1) * s + k;
  const int total = need > in ? need - in : 0;
  return {out, total / 2};
}

// Zero-padded cross-correlation; input channel loop outermost so the
// summation order differs from the library.
inline DenseGrid conv(const DenseGrid& x, const spev::ConvWeights& w) {
  const Axis ar = same_axis(x.height(), w.kernel_h, w.stride);
  const Axis ac = same_axis(x.width(), w.kernel_w, w.stride);
  std::vector<double> acc(static_cast<std::size_t>(ar.out) * ac.out * w.out_channels, 0.0);
  for (int ic = 0; ic < w.in_channels; ++ic) {
    for (int orow = 0; orow < ar.out; ++orow) {
      for (int ocol = 0; ocol < ac.out; ++ocol) {
        for (int kr = 0; kr < w.kernel_h; ++kr) {
          for (int kc = 0; kc < w.kernel_w; ++kc) {
            const int r = orow * w.stride + kr - ar.before;
            const int c = ocol * w.stride + kc - ac.before;
            const double v = (r >= 0 && r < x.height() && c >= 0 && c < x.width()) ? x.at(r, c, ic) : 0.0;
            for (int oc = 0; oc < w.out_channels; ++oc) {
              acc[(static_cast<std::size_t>(orow) * ac.out + ocol) * w.out_channels + oc] +=
                  v * w.kernel[((static_cast<std::size_t>(oc) * w.in_channels + ic) * w.kernel_h + kr) * w.kernel_w + kc];
            }
          }
        }
      }
    }
  }
  DenseGrid out(ar.out, ac.out, w.out_channels);
  for (int orow = 0; orow < ar.out; ++orow) {
    for (int ocol = 0; ocol < ac.out; ++ocol) {
      for (int oc = 0; oc < w.out_channels; ++oc) {
        out.at(orow, ocol, oc) = static_cast<float>(
            acc[(static_cast<std::size_t>(orow) * ac.out + ocol) * w.out_channels + oc] + w.bias[static_cast<std::size_t>(oc)]);
      }
    }
  }
  return out;
}

// Output positions whose window contains at least one active input.
inline std::set<Coord> reachable_outputs(const std::vector<Coord>& active, int h, int w, int k, int s) {
  const Axis ar = same_axis(h, k, s);
  const Axis ac = same_axis(w, k, s);
  std::set<Coord> in(active.begin(), active.end());
  std::set<Coord> out;
  for (int orow = 0; orow < ar.out; ++orow) {
    for (int ocol = 0; ocol < ac.out; ++ocol) {
      for (int kr = 0; kr < k; ++kr) {
        for (int kc = 0; kc < k; ++kc) {
          if (in.count({orow * s + kr - ar.before, ocol * s + kc - ac.before})) out.insert({orow, ocol});
        }
      }
    }
  }
  return out;
}

// Active-only max over each same-padded window; absent when the window has no
// active site.
inline std::map<Coord, std::vector<float>> sparse_maxpool(const spev::SparseGrid& x, int k, int s) {
  const Axis ar = same_axis(x.height(), k, s);
  const Axis ac = same_axis(x.width(), k, s);
  std::map<Coord, std::vector<float>> out;
  for (int orow = 0; orow < ar.out; ++orow) {
    for (int ocol = 0; ocol < ac.out; ++ocol) {
      std::vector<float> best;
      for (int kr = 0; kr < k; ++kr) {
        for (int kc = 0; kc < k; ++kc) {
          auto i = x.find({orow * s + kr - ar.before, ocol * s + kc - ac.before});
          if (!i) continue;
          const auto f = x.feature(*i);
          if (best.empty()) {
            best.assign(f.begin(), f.end());
          } else {
            for (std::size_t c = 0; c < best.size(); ++c) best[c] = std::max(best[c], f[c]);
          }
        }
      }
      if (!best.empty()) out[{orow, ocol}] = best;
    }
  }
  return out;
}

inline DenseGrid histogram(const std::vector<spev::Event>& events, int w, int h) {
  DenseGrid g(h, w, 2);
  for (const auto& e : events) g.at(e.y, e.x, e.polarity > 0 ? 1 : 0) += 1.0f;
  return g;
}

inline double box_iou(double ax0, double ay0, double ax1, double ay1, double bx0, double by0, double bx1, double by1) {
  const double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double a = std::max(0.0, ax1 - ax0) * std::max(0.0, ay1 - ay0);
  const double b = std::max(0.0, bx1 - bx0) * std::max(0.0, by1 - by0);
  if (a <= 0 || b <= 0) return 0.0;
  return ix * iy / (a + b - ix * iy);
}

inline double det_iou(const spev::Detection& a, const spev::Detection& b) {
  return box_iou(a.xmin, a.ymin, a.xmax, a.ymax, b.xmin, b.ymin, b.xmax, b.ymax);
}

// Per-cell decoding: every (cell, box) pair becomes a candidate, then filter.
inline std::vector<spev::Detection> decode(const std::vector<float>& raw, int S, int B, int C, double thr, double W,
                                           double H) {
  std::vector<spev::Detection> out;
  const int per_cell = B * 5 + C;
  auto clamp01 = [](double v) { return v < 0 ? 0.0 : (v > 1 ? 1.0 : v); };
  for (int cell = 0; cell < S * S; ++cell) {
    const int i = cell / S;
    const int j = cell % S;
    const float* p = raw.data() + cell * per_cell;
    int cls = 0;
    for (int c = 0; c < C; ++c) {
      if (clamp01(p[B * 5 + c]) > clamp01(p[B * 5 + cls])) cls = c;
    }
    for (int b = 0; b < B; ++b) {
      const float* q = p + b * 5;
      const double bw = q[2] * W;
      const double bh = q[3] * H;
      const double score = clamp01(q[4]) * clamp01(p[B * 5 + cls]);
      if (bw <= 0 || bh <= 0 || score < thr) continue;
      const double cx = (j + static_cast<double>(q[0])) * W / S;
      const double cy = (i + static_cast<double>(q[1])) * H / S;
      out.push_back({cls, score, cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2});
    }
  }
  return out;
}

// Repeatedly keep the best remaining box and delete its same-class overlaps.
inline std::vector<spev::Detection> nms(std::vector<spev::Detection> pool, double thr) {
  std::vector<spev::Detection> kept;
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const auto& a = pool[i];
      const auto& b = pool[best];
      const bool better = a.score > b.score ||
                          (a.score == b.score && (a.class_id < b.class_id ||
                                                  (a.class_id == b.class_id && (a.xmin < b.xmin ||
                                                                                (a.xmin == b.xmin && a.ymin < b.ymin)))));
      if (better) best = i;
    }
    const spev::Detection top = pool[best];
    kept.push_back(top);
    std::vector<spev::Detection> rest;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i == best) continue;
      if (pool[i].class_id == top.class_id && det_iou(pool[i], top) > thr) continue;
      rest.push_back(pool[i]);
    }
    pool = std::move(rest);
  }
  return kept;
}

// Average precision by explicit enumeration of every PR point: interpolated
// precision at each point is the maximum precision at any equal-or-higher
// recall.
inline double average_precision(const std::vector<std::vector<spev::Detection>>& dets,
                                const std::vector<std::vector<spev::GroundTruthBox>>& gts, int cls, double thr = 0.5) {
  struct Item {
    double score;
    std::size_t sample;
    std::size_t order;
    spev::Detection d;
  };
  std::vector<Item> items;
  int n_gt = 0;
  for (std::size_t s = 0; s < dets.size(); ++s) {
    for (std::size_t i = 0; i < dets[s].size(); ++i) {
      if (dets[s][i].class_id == cls) items.push_back({dets[s][i].score, s, i, dets[s][i]});
    }
    for (const auto& g : gts[s]) n_gt += g.class_id == cls;
  }
  if (n_gt == 0) return 0.0;
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<int> tp;
  for (const auto& it : items) {
    double best = -1;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < gts[it.sample].size(); ++g) {
      const auto& gt = gts[it.sample][g];
      if (gt.class_id != cls || used.count({it.sample, g})) continue;
      const double v = box_iou(it.d.xmin, it.d.ymin, it.d.xmax, it.d.ymax, gt.xmin, gt.ymin, gt.xmax, gt.ymax);
      if (v >= thr && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best >= 0) used.insert({it.sample, best_g});
    tp.push_back(best >= 0 ? 1 : 0);
  }
  std::vector<double> prec, rec;
  for (std::size_t k = 1; k <= tp.size(); ++k) {
    int t = 0;
    for (std::size_t j = 0; j < k; ++j) t += tp[j];
    prec.push_back(static_cast<double>(t) / static_cast<double>(k));
    rec.push_back(static_cast<double>(t) / n_gt);
  }
  double ap = 0;
  double last_recall = 0;
  for (std::size_t k = 0; k < prec.size(); ++k) {
    double p_interp = 0;
    for (std::size_t j = 0; j < prec.size(); ++j) {
      if (rec[j] >= rec[k]) p_interp = std::max(p_interp, prec[j]);
    }
    ap += (rec[k] - last_recall) * p_interp;
    last_recall = rec[k];
  }
  return ap;
}

// YOLO-v1 sum-squared loss by direct term enumeration.
inline double yolo_loss(const std::vector<float>& raw, const spev::DetectionTargets& t, int S, int B, int C) {
  const int per_cell = B * 5 + C;
  auto ssqrt = [](double v) { return std::copysign(std::sqrt(std::abs(v)), v); };
  double coord = 0, obj = 0, noobj = 0, cls = 0;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const float* p = raw.data() + (i * S + j) * per_cell;
      const auto& tc = t.cells[static_cast<std::size_t>(i * S + j)];
      const bool has_obj = tc.objectness > 0;
      int resp = -1;
      if (has_obj) {
        double best = -1;
        for (int b = 0; b < B; ++b) {
          const float* q = p + b * 5;
          const double px = (j + static_cast<double>(q[0])) / S, py = (i + static_cast<double>(q[1])) / S;
          const double tx = (j + static_cast<double>(tc.cx)) / S, ty = (i + static_cast<double>(tc.cy)) / S;
          const double v = box_iou(px - q[2] / 2.0, py - q[3] / 2.0, px + q[2] / 2.0, py + q[3] / 2.0,
                                   tx - tc.w / 2.0, ty - tc.h / 2.0, tx + tc.w / 2.0, ty + tc.h / 2.0);
          if (v > best) {
            best = v;
            resp = b;
          }
        }
      }
      for (int b = 0; b < B; ++b) {
        const float* q = p + b * 5;
        if (b == resp) {
          coord += std::pow(static_cast<double>(q[0]) - tc.cx, 2) + std::pow(static_cast<double>(q[1]) - tc.cy, 2) +
                   std::pow(ssqrt(q[2]) - ssqrt(tc.w), 2) + std::pow(ssqrt(q[3]) - ssqrt(tc.h), 2);
          obj += std::pow(static_cast<double>(q[4]) - 1.0, 2);
        } else {
          noobj += static_cast<double>(q[4]) * q[4];
        }
      }
      if (has_obj) {
        for (int c = 0; c < C; ++c) cls += std::pow(static_cast<double>(p[B * 5 + c]) - tc.class_one_hot[static_cast<std::size_t>(c)], 2);
      }
    }
  }
  return 5.0 * coord + obj + 0.5 * noobj + cls;
}

// Cell index that holds a box center.
inline std::pair<int, int> center_cell(const spev::GroundTruthBox& b, int S, double W, double H) {
  const double cx = (b.xmin + b.xmax) / 2 / W * S;
  const double cy = (b.ymin + b.ymax) / 2 / H * S;
  return {std::min(S - 1, static_cast<int>(std::floor(cy))), std::min(S - 1, static_cast<int>(std::floor(cx)))};
}

inline spev::SparseGrid random_sparse(spev::Rng& rng, int h, int w, int c, double density) {
  std::vector<Coord> sites;
  std::vector<float> feats;
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      if (rng.uniform() < density) {
        sites.push_back({r, col});
        for (int k = 0; k < c; ++k) feats.push_back(static_cast<float>(rng.uniform(-1, 1)));
      }
    }
  }
  return spev::SparseGrid(h, w, c, std::move(sites), std::move(feats));
}

inline spev::ConvWeights random_conv(spev::Rng& rng, int cin, int cout, int k, int s, bool bias) {
  auto wt = spev::ConvWeights::zeros(cout, cin, k, k, s, true);
  for (auto& v : wt.kernel) v = static_cast<float>(rng.uniform(-1, 1));
  if (bias) {
    for (auto& v : wt.bias) v = static_cast<float>(rng.uniform(-1, 1));
  }
  return wt;
}

inline double max_abs(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline std::vector<float> to_vec(std::span<const float> s) { return {s.begin(), s.end()}; }

}  // namespace oracle
