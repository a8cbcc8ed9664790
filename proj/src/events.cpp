#include "spev/events.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "spev/error.hpp"

namespace spev {

namespace {

bool event_less(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.polarity < b.polarity;
}

std::string describe(const Event& e) {
  return "(t=" + std::to_string(e.t) + ", x=" + std::to_string(e.x) + ", y=" +
         std::to_string(e.y) + ", p=" + std::to_string(e.polarity) + ")";
}

}  // namespace

EventStream::EventStream(int sensor_width, int sensor_height)
    : width_(sensor_width), height_(sensor_height) {
  if (sensor_width < 1 || sensor_height < 1) {
    throw ValidationError("sensor dimensions must be >= 1");
  }
}

EventStream::EventStream(int sensor_width, int sensor_height, std::vector<Event> events)
    : EventStream(sensor_width, sensor_height) {
  events_ = std::move(events);
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (e.polarity != 1 && e.polarity != -1) {
      throw ValidationError("event " + std::to_string(i) + " " + describe(e) +
                            ": polarity must be +1 or -1");
    }
    if (e.t < 0) {
      throw ValidationError("event " + std::to_string(i) + " " + describe(e) +
                            ": negative timestamp");
    }
    if (e.x < 0 || e.x >= width_ || e.y < 0 || e.y >= height_) {
      throw ValidationError("event " + std::to_string(i) + " " + describe(e) +
                            ": outside sensor " + std::to_string(width_) + "x" +
                            std::to_string(height_));
    }
  }
  std::stable_sort(events_.begin(), events_.end(), event_less);
}

std::vector<EventStream> slice_windows(const EventStream& s, std::int64_t window_us) {
  if (window_us < 1) {
    throw ValidationError("window must be >= 1 us");
  }
  std::vector<EventStream> windows;
  if (s.empty()) {
    return windows;
  }
  const std::int64_t count = s.events().back().t / window_us + 1;
  std::vector<std::vector<Event>> buckets(static_cast<std::size_t>(count));
  for (const Event& e : s.events()) {
    buckets[static_cast<std::size_t>(e.t / window_us)].push_back(e);
  }
  windows.reserve(buckets.size());
  for (auto& b : buckets) {
    windows.emplace_back(s.width(), s.height(), std::move(b));
  }
  return windows;
}

std::vector<EventStream> split_equal_time(const EventStream& s, int count) {
  if (count < 1) {
    throw ValidationError("sequence count must be >= 1");
  }
  std::vector<std::vector<Event>> buckets(static_cast<std::size_t>(count));
  if (!s.empty()) {
    const std::int64_t t0 = s.events().front().t;
    const std::int64_t duration = s.events().back().t - t0 + 1;
    std::size_t k = 0;
    for (const Event& e : s.events()) {
      // slice k covers [t0 + floor(k*D/n), t0 + floor((k+1)*D/n))
      while (e.t - t0 >= (static_cast<std::int64_t>(k) + 1) * duration / count) {
        ++k;
      }
      buckets[k].push_back(e);
    }
  }
  std::vector<EventStream> out;
  out.reserve(buckets.size());
  for (auto& b : buckets) {
    out.emplace_back(s.width(), s.height(), std::move(b));
  }
  return out;
}

std::vector<EventStream> split_at(const EventStream& s, std::span<const std::size_t> cuts) {
  std::vector<EventStream> out;
  std::size_t begin = 0;
  const auto& ev = s.events();
  for (std::size_t cut : cuts) {
    if (cut < begin || cut > ev.size()) {
      throw ValidationError("split_at: cut " + std::to_string(cut) + " is out of order or past the end");
    }
    out.emplace_back(s.width(), s.height(), std::vector<Event>(ev.begin() + static_cast<std::ptrdiff_t>(begin),
                                                               ev.begin() + static_cast<std::ptrdiff_t>(cut)));
    begin = cut;
  }
  out.emplace_back(s.width(), s.height(), std::vector<Event>(ev.begin() + static_cast<std::ptrdiff_t>(begin), ev.end()));
  return out;
}

EventStream rescale(const EventStream& s, int to_width, int to_height) {
  if (to_width < 1 || to_height < 1) {
    throw ValidationError("rescale target dimensions must be >= 1");
  }
  std::vector<Event> out;
  out.reserve(s.size());
  for (const Event& e : s.events()) {
    Event r = e;
    r.x = static_cast<int>(static_cast<std::int64_t>(e.x) * to_width / s.width());
    r.y = static_cast<int>(static_cast<std::int64_t>(e.y) * to_height / s.height());
    out.push_back(r);
  }
  return EventStream(to_width, to_height, std::move(out));
}

SiteTally aggregate_per_site(const EventStream& s) {
  SiteTally tally;
  for (const Event& e : s.events()) {
    auto& counts = tally[Coord{e.y, e.x}];
    (e.polarity > 0 ? counts.positive : counts.negative) += 1;
  }
  return tally;
}

DenseGrid histogram(const EventStream& s, int width, int height) {
  DenseGrid grid(height, width, 2);
  const auto& events = s.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) {
      throw ValidationError("event " + std::to_string(i) + " " + describe(e) +
                            " outside histogram " + std::to_string(width) + "x" +
                            std::to_string(height));
    }
    grid.at(e.y, e.x, e.polarity > 0 ? kPositiveChannel : kNegativeChannel) += 1.0f;
  }
  return grid;
}

void write_events(std::ostream& out, const EventStream& s) {
  out << "# " << s.width() << ' ' << s.height() << '\n';
  for (const Event& e : s.events()) {
    out << e.t << ' ' << e.x << ' ' << e.y << ' ' << e.polarity << '\n';
  }
}

EventStream read_events(std::istream& in) {
  std::string line;
  int line_no = 0;
  int width = 0;
  int height = 0;
  bool have_header = false;
  std::vector<Event> events;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream fields(line);
    if (!have_header) {
      std::string hash;
      if (!(fields >> hash >> width >> height) || hash != "#" || width < 1 || height < 1) {
        throw FormatError("line " + std::to_string(line_no) +
                          ": expected header '# width height'");
      }
      have_header = true;
      continue;
    }
    if (line.front() == '#') {
      continue;
    }
    Event e;
    std::string extra;
    if (!(fields >> e.t >> e.x >> e.y >> e.polarity) || (fields >> extra)) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 't x y p'");
    }
    if (e.polarity != 1 && e.polarity != -1) {
      throw FormatError("line " + std::to_string(line_no) + ": polarity must be 1 or -1");
    }
    if (e.t < 0 || e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) {
      throw FormatError("line " + std::to_string(line_no) + ": event outside sensor or before t=0");
    }
    events.push_back(e);
  }
  if (!have_header) {
    throw FormatError("missing '# width height' header");
  }
  return EventStream(width, height, std::move(events));
}

}  // namespace spev
