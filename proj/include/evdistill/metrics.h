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

#ifndef EVDISTILL_METRICS_H_
#define EVDISTILL_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evdistill {

// Binary instance mask over an H×W grid, row-major.
struct Mask {
  size_t id = 0;
  size_t height = 0;
  size_t width = 0;
  std::vector<uint8_t> cells;

  static Mask empty(size_t id, size_t height, size_t width);
  bool at(size_t y, size_t x) const { return cells[y * width + x] != 0; }
  void set(size_t y, size_t x, bool on = true) { cells[y * width + x] = on ? 1 : 0; }
  size_t area() const;
};

struct MaskSet {
  size_t height = 0;
  size_t width = 0;
  std::vector<Mask> masks;

  // Masks must be nonempty, match the set's dims, and carry distinct ids.
  void validate() const;
};

double iou(const Mask& a, const Mask& b);
size_t intersection(const Mask& a, const Mask& b);

struct MatchPair {
  size_t gt_id = 0;
  size_t pred_id = 0;
  double iou = 0.0;

  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // in selection order
  std::vector<size_t> unmatched_pred;
  std::vector<size_t> unmatched_gt;
};

// Greedy one-to-one matching by descending IoU over all pairs with IoU > 0.
// Ties go to the lower gt id, then the lower pred id.
MatchResult match_instances(const MaskSet& gt, const MaskSet& pred);

enum class AiouDenominator { kMaskTotal, kImageArea };

AiouDenominator parse_aiou_denominator(std::string_view text);

struct InstanceScore {
  size_t gt_id = 0;
  std::optional<size_t> pred_id;
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
  size_t area = 0;
};

struct MetricsReport {
  double mP = 0.0;
  double mR = 0.0;
  double mIoU = 0.0;
  double aIoU = 0.0;
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  size_t image_area = 0;
  AiouDenominator denominator = AiouDenominator::kMaskTotal;
  std::vector<InstanceScore> instances;
};

// Per ground-truth instance precision/recall/IoU (zero when unmatched),
// averaged over instances; aIoU weights IoU by instance area.
MetricsReport compute_report(const MaskSet& gt, const MaskSet& pred,
                             AiouDenominator denominator = AiouDenominator::kMaskTotal);

// Pools the instance tables of several frames and recomputes the aggregates.
MetricsReport pool_reports(std::span<const MetricsReport> reports);

// {"mP":..,"mR":..,"mIoU":..,"aIoU":..,"tp":..,"fp":..,"fn":..,"instances":[..]}
// with every real printed in fixed notation with 6 decimals.
std::string to_json(const MetricsReport& report);

}  // namespace evdistill

#endif  // EVDISTILL_METRICS_H_
