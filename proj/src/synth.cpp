#include "spev/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spev/error.hpp"
#include "spev/random.hpp"

namespace spev {

namespace {

// Level crossings closer than this to the interpolated signal still fire, so
// that a ramp of exactly n*c yields n events despite float storage.
constexpr double kLevelTolerance = 1e-6;
// Crossing times this close below a whole microsecond (relative to the frame
// interval) snap up to it; absorbs float32 storage error of the frames.
constexpr double kTimeSnapRelative = 1e-6;

}  // namespace

FrameSequence::FrameSequence(std::vector<std::int64_t> timestamps, std::vector<DenseGrid> frames)
    : timestamps_(std::move(timestamps)), frames_(std::move(frames)) {
  if (frames_.empty()) {
    throw ValidationError("frame sequence needs at least one frame");
  }
  if (timestamps_.size() != frames_.size()) {
    throw ValidationError("frame sequence has " + std::to_string(frames_.size()) +
                          " frames but " + std::to_string(timestamps_.size()) + " timestamps");
  }
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (frames_[i].channels() != 1 || frames_[i].shape() != frames_.front().shape()) {
      throw ValidationError("frame " + std::to_string(i) +
                            " must be single-channel and match the first frame's size");
    }
    if (i > 0 && timestamps_[i] <= timestamps_[i - 1]) {
      throw ValidationError("frame timestamps must be strictly increasing");
    }
  }
  if (timestamps_.front() < 0) {
    throw ValidationError("frame timestamps must be non-negative");
  }
}

ContrastThreshold::ContrastThreshold(double c) : c_(c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ValidationError("contrast threshold must be positive");
  }
}

DenseGrid log_intensity(const DenseGrid& frame) {
  DenseGrid out(frame.height(), frame.width(), frame.channels());
  auto dst = out.values();
  auto src = frame.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(std::log(static_cast<double>(src[i]) + kLogOffset));
  }
  return out;
}

EventStream synthesize(const FrameSequence& fs, ContrastThreshold c) {
  std::vector<DenseGrid> logs;
  logs.reserve(fs.size());
  for (const auto& f : fs.frames()) {
    logs.push_back(log_intensity(f));
  }
  return synthesize_log(FrameSequence(fs.timestamps(), std::move(logs)), c);
}

EventStream synthesize_log(const FrameSequence& log_frames, ContrastThreshold c) {
  if (log_frames.size() < 2) {
    throw ValidationError("event synthesis needs at least 2 frames");
  }
  const double step = c.value();
  const int height = log_frames.height();
  const int width = log_frames.width();
  const auto& ts = log_frames.timestamps();
  const auto& frames = log_frames.frames();

  std::vector<Event> events;
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const double base = frames.front().at(row, col, 0);
      // reference level = base + level * step
      std::int64_t level = 0;
      for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
        const double a = frames[k].at(row, col, 0);
        const double b = frames[k + 1].at(row, col, 0);
        if (a == b) {
          continue;
        }
        const double dt = static_cast<double>(ts[k + 1] - ts[k]);
        const int direction = b > a ? 1 : -1;
        for (;;) {
          const double target = base + static_cast<double>(level + direction) * step;
          const bool crossed = direction > 0 ? b >= target - kLevelTolerance
                                             : b <= target + kLevelTolerance;
          if (!crossed) {
            break;
          }
          double frac = (target - a) / (b - a);
          frac = std::clamp(frac, 0.0, 1.0);
          auto offset = static_cast<std::int64_t>(std::floor(frac * dt + dt * kTimeSnapRelative));
          offset = std::min<std::int64_t>(offset, ts[k + 1] - ts[k]);
          events.push_back(Event{ts[k] + offset, col, row, direction});
          level += direction;
        }
      }
    }
  }
  return EventStream(width, height, std::move(events));
}

DenseGrid reconstruct(const EventStream& s, ContrastThreshold c, const DenseGrid& initial) {
  if (initial.channels() != 1 || initial.width() != s.width() || initial.height() != s.height()) {
    throw ValidationError("initial log frame must be single-channel and match stream dimensions");
  }
  std::vector<std::int64_t> net(static_cast<std::size_t>(s.width()) * s.height(), 0);
  for (const Event& e : s.events()) {
    net[static_cast<std::size_t>(e.y) * s.width() + e.x] += e.polarity;
  }
  DenseGrid out(initial.height(), initial.width(), 1);
  auto dst = out.values();
  auto src = initial.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<float>(static_cast<double>(src[i]) +
                                c.value() * static_cast<double>(net[i]));
  }
  return out;
}

EventStream random_event_sample(int width, int height, double density, Rng& rng, int max_events_per_site,
                                std::int64_t duration_us) {
  if (width < 1 || height < 1) throw ValidationError("random sample: dims must be >= 1");
  if (!(density >= 0.0 && density <= 1.0)) throw ValidationError("random sample: density must be in [0, 1]");
  if (max_events_per_site < 1 || duration_us < 1) {
    throw ValidationError("random sample: events per site and duration must be >= 1");
  }
  const auto pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const auto active = static_cast<std::size_t>(std::floor(density * static_cast<double>(pixels)));
  std::vector<std::size_t> order(pixels);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `active` entries are a uniform subset.
  for (std::size_t i = 0; i < active; ++i) {
    std::swap(order[i], order[i + rng.index(pixels - i)]);
  }
  std::vector<Event> events;
  for (std::size_t i = 0; i < active; ++i) {
    const int x = static_cast<int>(order[i] % static_cast<std::size_t>(width));
    const int y = static_cast<int>(order[i] / static_cast<std::size_t>(width));
    const int n = rng.integer(1, max_events_per_site);
    for (int k = 0; k < n; ++k) {
      const auto t = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(duration_us)));
      events.push_back({t, x, y, rng.coin() ? 1 : -1});
    }
  }
  return EventStream(width, height, std::move(events));
}

}  // namespace spev
