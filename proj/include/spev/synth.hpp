#pragma once

#include <cstdint>
#include <vector>

#include "spev/events.hpp"
#include "spev/tensor.hpp"

namespace spev {

// Offset added before taking the log so black pixels stay finite.
inline constexpr double kLogOffset = 1e-3;
inline constexpr double kDefaultContrastThreshold = 0.1;

// Single-channel frames at strictly increasing microsecond timestamps.
class FrameSequence {
 public:
  FrameSequence(std::vector<std::int64_t> timestamps, std::vector<DenseGrid> frames);

  const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
  const std::vector<DenseGrid>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  int height() const { return frames_.front().height(); }
  int width() const { return frames_.front().width(); }

 private:
  std::vector<std::int64_t> timestamps_;
  std::vector<DenseGrid> frames_;
};

// Log-intensity step between two consecutive events at a pixel.
class ContrastThreshold {
 public:
  explicit ContrastThreshold(double c);
  double value() const { return c_; }

 private:
  double c_;
};

// ln(I + 1e-3) per pixel.
DenseGrid log_intensity(const DenseGrid& frame);

// Events from intensity frames in [0, 1]: converts to log intensity, then
// calls synthesize_log.
EventStream synthesize(const FrameSequence& fs, ContrastThreshold c);

// Events from frames that already hold log intensity. Each pixel keeps a
// reference level starting at its first-frame value; the signal is linearly
// interpolated between frames and every crossing of reference +/- c emits an
// event at the (floored) crossing time and moves the reference to the
// crossed level. Throws ValidationError for fewer than 2 frames.
EventStream synthesize_log(const FrameSequence& log_frames, ContrastThreshold c);

// initial + c * (positive - negative) per pixel.
DenseGrid reconstruct(const EventStream& s, ContrastThreshold c, const DenseGrid& initial);

class Rng;

// Random sample with exactly floor(density * width * height) distinct active
// pixels, each firing 1..max_events_per_site events of random polarity at
// uniform times in [0, duration_us).
EventStream random_event_sample(int width, int height, double density, Rng& rng, int max_events_per_site = 3,
                                std::int64_t duration_us = 50000);

}  // namespace spev
