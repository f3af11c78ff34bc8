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

#ifndef EVDISTILL_EVENTS_H_
#define EVDISTILL_EVENTS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "evdistill/tensor.h"

namespace evdistill {

struct Event {
  int64_t t = 0;  // microseconds
  int32_t x = 0;  // column
  int32_t y = 0;  // row
  int8_t p = 1;   // -1 or +1

  friend bool operator==(const Event&, const Event&) = default;
};

// Half-open in time except that t == end_us is kept and lands in the last bin.
struct TimeWindow {
  int64_t start_us = 0;
  int64_t end_us = 0;
};

inline constexpr int64_t kDefaultWindowUs = 40'000;
inline constexpr size_t kDefaultBins = 3;

struct VoxelOptions {
  size_t bins = kDefaultBins;
  // Accumulate p instead of 1 per event.
  bool signed_polarity = false;
};

// H×W×B grid of per-bin event counts.
struct EventVolume {
  Tensor grid;
  TimeWindow window;
  size_t bins = 0;
};

EventVolume voxelize(std::span<const Event> stream, TimeWindow window, size_t height, size_t width,
                     VoxelOptions options = {});

// Scales every channel by its largest magnitude. All-zero channels stay zero.
EventVolume normalize_volume(const EventVolume& volume);

class EventParseError : public std::runtime_error {
 public:
  EventParseError(size_t line, const std::string& what);
  size_t line() const { return line_; }

 private:
  size_t line_;
};

struct EventFile {
  std::vector<Event> events;
  std::optional<size_t> height;
  std::optional<size_t> width;
};

// Text format: one "t,x,y,p" per line with p in {0,1} (0 means -1). Lines
// starting with '#' are comments; "# H=<int> W=<int>" declares the sensor
// size. Explicit height/width override the header.
EventFile parse_events(std::istream& in, std::optional<size_t> height = {},
                       std::optional<size_t> width = {});
EventFile read_events(const std::filesystem::path& path, std::optional<size_t> height = {},
                      std::optional<size_t> width = {});
void write_events(const std::filesystem::path& path, std::span<const Event> events, size_t height,
                  size_t width);

}  // namespace evdistill

#endif  // EVDISTILL_EVENTS_H_
