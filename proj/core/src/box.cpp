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

#include "wdda/box.hpp"

#include <algorithm>
#include <cmath>

namespace wdda {

namespace {

// log(1000 / 16), the usual bound on predicted size deltas.
constexpr double kMaxSizeDelta = 4.135166556742356;

}  // namespace

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Box clip_box(const Box& b, double w, double h, double min_size) {
  Box c{std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h),
        std::clamp(b.x2, 0.0, w), std::clamp(b.y2, 0.0, h)};
  if (c.x2 - c.x1 < min_size) {
    const double mid = std::clamp(0.5 * (c.x1 + c.x2), 0.5 * min_size,
                                  w - 0.5 * min_size);
    c.x1 = mid - 0.5 * min_size;
    c.x2 = mid + 0.5 * min_size;
  }
  if (c.y2 - c.y1 < min_size) {
    const double mid = std::clamp(0.5 * (c.y1 + c.y2), 0.5 * min_size,
                                  h - 0.5 * min_size);
    c.y1 = mid - 0.5 * min_size;
    c.y2 = mid + 0.5 * min_size;
  }
  return c;
}

Anchor anchor_from_box(const Box& box) {
  return {0.5 * (box.x1 + box.x2), 0.5 * (box.y1 + box.y2), box.width(),
          box.height()};
}

BoxDelta encode(const Box& box, const Anchor& anchor) {
  const Anchor b = anchor_from_box(box);
  return {(b.cx - anchor.cx) / anchor.w, (b.cy - anchor.cy) / anchor.h,
          std::log(b.w / anchor.w), std::log(b.h / anchor.h)};
}

Box decode(const BoxDelta& d, const Anchor& anchor) {
  const double cx = anchor.cx + d.tx * anchor.w;
  const double cy = anchor.cy + d.ty * anchor.h;
  const double w = anchor.w * std::exp(std::min(d.tw, kMaxSizeDelta));
  const double h = anchor.h * std::exp(std::min(d.th, kMaxSizeDelta));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace wdda
