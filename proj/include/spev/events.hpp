#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "spev/tensor.hpp"

namespace spev {

// One brightness-change record. t in integer microseconds, x is the column,
// y is the row, polarity is +1 or -1.
struct Event {
  std::int64_t t = 0;
  int x = 0;
  int y = 0;
  int polarity = 1;

  friend constexpr bool operator==(const Event&, const Event&) = default;
};

// Events of one sensor, kept sorted by (t, y, x, polarity).
class EventStream {
 public:
  EventStream() = default;
  EventStream(int sensor_width, int sensor_height);
  // Sorts and validates; throws ValidationError on bad polarity, negative
  // time or out-of-sensor coordinates.
  EventStream(int sensor_width, int sensor_height, std::vector<Event> events);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  friend bool operator==(const EventStream&, const EventStream&) = default;

 private:
  int width_ = 1;
  int height_ = 1;
  std::vector<Event> events_;
};

struct PolarityCounts {
  std::int64_t negative = 0;
  std::int64_t positive = 0;

  friend constexpr bool operator==(const PolarityCounts&, const PolarityCounts&) = default;
};

// Per-site event counts, keyed by (row, col).
using SiteTally = std::map<Coord, PolarityCounts>;

// Histogram channel layout.
inline constexpr int kNegativeChannel = 0;
inline constexpr int kPositiveChannel = 1;

// Half-open windows [k*window, (k+1)*window) from k = 0 up to the window
// holding the last event. Empty windows in between are kept.
std::vector<EventStream> slice_windows(const EventStream& s, std::int64_t window_us);

// Exactly `count` consecutive slices of equal duration spanning
// [t_first, t_last]; used to feed one sample as several sequences.
std::vector<EventStream> split_equal_time(const EventStream& s, int count);

// Splits the time-ordered events at the given indices (non-decreasing, each
// <= size()); returns cuts.size() + 1 consecutive streams.
std::vector<EventStream> split_at(const EventStream& s, std::span<const std::size_t> cuts);

EventStream rescale(const EventStream& s, int to_width, int to_height);

SiteTally aggregate_per_site(const EventStream& s);

// Two-channel count grid (channel 0 negative, 1 positive). Throws
// ValidationError naming the first event outside width x height.
DenseGrid histogram(const EventStream& s, int width, int height);

// Text format: header "# width height", then "t x y p" per line.
void write_events(std::ostream& out, const EventStream& s);
// Throws FormatError with the offending line number.
EventStream read_events(std::istream& in);

}  // namespace spev
