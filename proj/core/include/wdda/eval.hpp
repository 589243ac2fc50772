// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WDDA_EVAL_HPP_
#define WDDA_EVAL_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "wdda/box.hpp"
#include "wdda/data_synth.hpp"
#include "wdda/detector.hpp"

namespace wdda {

struct ScoredBox {
  std::size_t image = 0;
  Box box;
  double score = 0.0;
};

struct ApResult {
  bool defined = false;  // false when the class has no ground truth
  double ap = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  std::size_t matched = 0;
};

/// All-point interpolated average precision for one class. Detections are
/// visited by descending score (input order on ties); each matches the
/// unmatched ground-truth box of its image with the highest IoU, provided
/// that IoU reaches `iou_threshold`. The area under the precision envelope
/// is returned.
ApResult average_precision(const std::vector<ScoredBox>& detections,
                           const std::vector<std::vector<Box>>& ground_truth,
                           double iou_threshold);

struct EvalReport {
  // Only classes with at least one ground-truth instance appear here.
  std::map<int, double> per_class_ap;
  double map = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_predictions = 0;
  std::size_t num_matched = 0;
};

EvalReport evaluate_detections(
    const std::vector<std::vector<Detection>>& detections,
    const Dataset& data, int num_classes, double iou_threshold);

// Runs detect() over the dataset in fixed-size batches.
EvalReport evaluate(Network& backbone, DetectorHeads& heads,
                    const Dataset& data, const DetectorConfig& config,
                    double iou_threshold = 0.5);

// Stable JSON text of a report.
std::string format_report(const EvalReport& report);

}  // namespace wdda

#endif  // WDDA_EVAL_HPP_
