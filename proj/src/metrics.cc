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

#include "evdistill/metrics.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace evdistill {

Mask Mask::empty(size_t id, size_t height, size_t width) {
  return Mask{id, height, width, std::vector<uint8_t>(height * width, 0)};
}

size_t Mask::area() const {
  return static_cast<size_t>(std::count_if(cells.begin(), cells.end(), [](uint8_t c) { return c != 0; }));
}

void MaskSet::validate() const {
  std::set<size_t> ids;
  for (const Mask& m : masks) {
    if (m.height != height || m.width != width || m.cells.size() != height * width) {
      throw std::invalid_argument("mask " + std::to_string(m.id) + " does not match set dims " +
                                  std::to_string(height) + "x" + std::to_string(width));
    }
    if (m.area() == 0) throw std::invalid_argument("mask " + std::to_string(m.id) + " is empty");
    if (!ids.insert(m.id).second) {
      throw std::invalid_argument("duplicate mask id " + std::to_string(m.id));
    }
  }
}

size_t intersection(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("iou: mask dims differ");
  }
  size_t n = 0;
  for (size_t i = 0; i < a.cells.size(); ++i) n += (a.cells[i] && b.cells[i]) ? 1 : 0;
  return n;
}

double iou(const Mask& a, const Mask& b) {
  const size_t inter = intersection(a, b);
  const size_t uni = a.area() + b.area() - inter;
  if (uni == 0) throw std::invalid_argument("iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_instances(const MaskSet& gt, const MaskSet& pred) {
  if (!gt.masks.empty() && !pred.masks.empty() &&
      (gt.height != pred.height || gt.width != pred.width)) {
    throw std::invalid_argument("match_instances: gt and pred dims differ");
  }
  struct Candidate {
    double iou;
    size_t gt_id, pred_id;
  };
  std::vector<Candidate> candidates;
  for (const Mask& g : gt.masks) {
    for (const Mask& p : pred.masks) {
      const double v = iou(g, p);
      if (v > 0.0) candidates.push_back({v, g.id, p.id});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
    return a.pred_id < b.pred_id;
  });
  MatchResult result;
  std::set<size_t> used_gt, used_pred;
  for (const Candidate& c : candidates) {
    if (used_gt.contains(c.gt_id) || used_pred.contains(c.pred_id)) continue;
    used_gt.insert(c.gt_id);
    used_pred.insert(c.pred_id);
    result.pairs.push_back({c.gt_id, c.pred_id, c.iou});
  }
  for (const Mask& g : gt.masks)
    if (!used_gt.contains(g.id)) result.unmatched_gt.push_back(g.id);
  for (const Mask& p : pred.masks)
    if (!used_pred.contains(p.id)) result.unmatched_pred.push_back(p.id);
  return result;
}

AiouDenominator parse_aiou_denominator(std::string_view text) {
  if (text == "mask_total") return AiouDenominator::kMaskTotal;
  if (text == "image_area") return AiouDenominator::kImageArea;
  throw std::invalid_argument("unknown aIoU denominator '" + std::string(text) + "'");
}

namespace {

void aggregate(MetricsReport& report) {
  const size_t n = report.instances.size();
  double sp = 0.0, sr = 0.0, si = 0.0, weighted = 0.0;
  size_t total_area = 0;
  for (const InstanceScore& s : report.instances) {
    sp += s.precision;
    sr += s.recall;
    si += s.iou;
    weighted += static_cast<double>(s.area) * s.iou;
    total_area += s.area;
  }
  const double inv = n ? 1.0 / static_cast<double>(n) : 0.0;
  report.mP = sp * inv;
  report.mR = sr * inv;
  report.mIoU = si * inv;
  const size_t denom =
      report.denominator == AiouDenominator::kMaskTotal ? total_area : report.image_area;
  report.aIoU = denom ? weighted / static_cast<double>(denom) : 0.0;
}

}  // namespace

MetricsReport compute_report(const MaskSet& gt, const MaskSet& pred, AiouDenominator denominator) {
  if (gt.masks.empty()) throw std::invalid_argument("compute_report: ground truth set is empty");
  gt.validate();
  pred.validate();
  const MatchResult match = match_instances(gt, pred);
  MetricsReport report;
  report.denominator = denominator;
  report.image_area = gt.height * gt.width;
  report.tp = match.pairs.size();
  report.fp = match.unmatched_pred.size();
  report.fn = match.unmatched_gt.size();
  for (const Mask& g : gt.masks) {
    InstanceScore score;
    score.gt_id = g.id;
    score.area = g.area();
    auto it = std::find_if(match.pairs.begin(), match.pairs.end(),
                           [&](const MatchPair& p) { return p.gt_id == g.id; });
    if (it != match.pairs.end()) {
      const Mask& p = *std::find_if(pred.masks.begin(), pred.masks.end(),
                                    [&](const Mask& m) { return m.id == it->pred_id; });
      const double inter = static_cast<double>(intersection(g, p));
      score.pred_id = p.id;
      score.precision = inter / static_cast<double>(p.area());
      score.recall = inter / static_cast<double>(score.area);
      score.iou = it->iou;
    }
    report.instances.push_back(score);
  }
  aggregate(report);
  return report;
}

MetricsReport pool_reports(std::span<const MetricsReport> reports) {
  MetricsReport pooled;
  if (reports.empty()) return pooled;
  pooled.denominator = reports.front().denominator;
  for (const MetricsReport& r : reports) {
    pooled.tp += r.tp;
    pooled.fp += r.fp;
    pooled.fn += r.fn;
    pooled.image_area += r.image_area;
    pooled.instances.insert(pooled.instances.end(), r.instances.begin(), r.instances.end());
  }
  aggregate(pooled);
  return pooled;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string to_json(const MetricsReport& r) {
  std::string out = "{\"mP\":" + fixed6(r.mP) + ",\"mR\":" + fixed6(r.mR) +
                    ",\"mIoU\":" + fixed6(r.mIoU) + ",\"aIoU\":" + fixed6(r.aIoU) +
                    ",\"tp\":" + std::to_string(r.tp) + ",\"fp\":" + std::to_string(r.fp) +
                    ",\"fn\":" + std::to_string(r.fn) + ",\"instances\":[";
  for (size_t i = 0; i < r.instances.size(); ++i) {
    const InstanceScore& s = r.instances[i];
    out += (i ? "," : "");
    out += "{\"gt\":" + std::to_string(s.gt_id) + ",\"pred\":" +
           (s.pred_id ? std::to_string(*s.pred_id) : std::string("null")) +
           ",\"p\":" + fixed6(s.precision) + ",\"r\":" + fixed6(s.recall) +
           ",\"iou\":" + fixed6(s.iou) + ",\"area\":" + std::to_string(s.area) + "}";
  }
  out += "]}";
  return out;
}

}  // namespace evdistill
