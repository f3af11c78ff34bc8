/* Copyright 2026 The EvDistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "evdistill/events.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>

namespace evdistill {

EventVolume voxelize(std::span<const Event> stream, TimeWindow window, size_t height, size_t width,
                     VoxelOptions options) {
  if (window.end_us <= window.start_us) {
    throw std::invalid_argument("voxelize: empty window [" + std::to_string(window.start_us) + ", " +
                                std::to_string(window.end_us) + "]");
  }
  if (options.bins == 0) throw std::invalid_argument("voxelize: bins must be >= 1");
  const size_t bins = options.bins;
  const int64_t span_us = window.end_us - window.start_us;
  EventVolume volume{Tensor({height, width, bins}), window, bins};
  auto data = volume.grid.data();
  for (const Event& e : stream) {
    if (e.t < window.start_us || e.t > window.end_us) continue;
    if (e.x < 0 || e.y < 0 || static_cast<size_t>(e.x) >= width ||
        static_cast<size_t>(e.y) >= height) {
      throw std::out_of_range("voxelize: event at (" + std::to_string(e.x) + "," +
                              std::to_string(e.y) + ") outside " + std::to_string(height) + "x" +
                              std::to_string(width));
    }
    // Integer arithmetic keeps bin edges exact under time shifts.
    const auto offset = static_cast<__int128>(e.t - window.start_us) * static_cast<__int128>(bins);
    size_t bin = static_cast<size_t>(offset / span_us);
    bin = std::min(bin, bins - 1);
    const size_t idx = (static_cast<size_t>(e.y) * width + static_cast<size_t>(e.x)) * bins + bin;
    data[idx] += options.signed_polarity ? static_cast<double>(e.p) : 1.0;
  }
  return volume;
}

EventVolume normalize_volume(const EventVolume& volume) {
  EventVolume out = volume;
  const size_t bins = volume.bins;
  auto data = out.grid.data();
  for (size_t b = 0; b < bins; ++b) {
    double peak = 0.0;
    for (size_t i = b; i < data.size(); i += bins) peak = std::max(peak, std::abs(data[i]));
    if (peak == 0.0) continue;
    for (size_t i = b; i < data.size(); i += bins) data[i] /= peak;
  }
  return out;
}

EventParseError::EventParseError(size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

template <typename T>
bool parse_number(std::string_view field, T& out) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  if (field.empty()) return false;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

void parse_header(std::string_view line, std::optional<size_t>& height,
                  std::optional<size_t>& width) {
  std::istringstream is{std::string(line.substr(1))};
  std::string token;
  while (is >> token) {
    size_t value = 0;
    if (token.rfind("H=", 0) == 0 && parse_number(std::string_view(token).substr(2), value)) {
      height = value;
    } else if (token.rfind("W=", 0) == 0 &&
               parse_number(std::string_view(token).substr(2), value)) {
      width = value;
    }
  }
}

}  // namespace

EventFile parse_events(std::istream& in, std::optional<size_t> height,
                       std::optional<size_t> width) {
  EventFile file;
  std::optional<size_t> header_h, header_w;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty()) continue;
    if (view.front() == '#') {
      parse_header(view, header_h, header_w);
      continue;
    }
    std::string_view fields[4];
    size_t n = 0;
    size_t start = 0;
    while (n < 4) {
      const size_t comma = view.find(',', start);
      fields[n++] = view.substr(start, comma == std::string_view::npos ? view.npos : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
      if (n == 4) throw EventParseError(line_no, "too many fields");
    }
    if (n != 4) throw EventParseError(line_no, "expected 4 comma-separated fields");
    Event e;
    int polarity = 0;
    if (!parse_number(fields[0], e.t) || e.t < 0) throw EventParseError(line_no, "bad timestamp");
    if (!parse_number(fields[1], e.x)) throw EventParseError(line_no, "bad x coordinate");
    if (!parse_number(fields[2], e.y)) throw EventParseError(line_no, "bad y coordinate");
    if (!parse_number(fields[3], polarity) || (polarity != 0 && polarity != 1)) {
      throw EventParseError(line_no, "polarity must be 0 or 1");
    }
    e.p = polarity == 1 ? 1 : -1;
    if (!file.events.empty() && e.t < file.events.back().t) {
      throw EventParseError(line_no, "timestamp " + std::to_string(e.t) + " decreases");
    }
    file.events.push_back(e);
    // Bounds are checked once the size is known; keep the line for reporting.
    const size_t h = height.value_or(header_h.value_or(0));
    const size_t w = width.value_or(header_w.value_or(0));
    if ((h && (e.y < 0 || static_cast<size_t>(e.y) >= h)) ||
        (w && (e.x < 0 || static_cast<size_t>(e.x) >= w)) || e.x < 0 || e.y < 0) {
      throw EventParseError(line_no, "coordinates out of bounds");
    }
  }
  file.height = height ? height : header_h;
  file.width = width ? width : header_w;
  return file;
}

EventFile read_events(const std::filesystem::path& path, std::optional<size_t> height,
                      std::optional<size_t> width) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event file " + path.string());
  return parse_events(in, height, width);
}

void write_events(const std::filesystem::path& path, std::span<const Event> events, size_t height,
                  size_t width) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event file " + path.string());
  out << "# H=" << height << " W=" << width << '\n';
  for (const Event& e : events) {
    out << e.t << ',' << e.x << ',' << e.y << ',' << (e.p > 0 ? 1 : 0) << '\n';
  }
}

}  // namespace evdistill
