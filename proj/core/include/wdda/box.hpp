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

#ifndef WDDA_BOX_HPP_
#define WDDA_BOX_HPP_

namespace wdda {

// Axis-aligned box in pixel coordinates, origin top-left, x2 > x1, y2 > y1.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }
  bool within(double image_w, double image_h) const {
    return x1 >= 0 && y1 >= 0 && x2 <= image_w && y2 <= image_h;
  }
  bool operator==(const Box&) const = default;
};

// Intersection over union; 0 when the boxes do not overlap in area.
double iou(const Box& a, const Box& b);

// Clips to [0, w] x [0, h], keeping at least `min_size` of extent.
Box clip_box(const Box& b, double w, double h, double min_size = 1.0);

struct Anchor {
  double cx = 0, cy = 0, w = 0, h = 0;

  Box box() const {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
};

// Standard (tx, ty, tw, th) box parametrization relative to an anchor.
struct BoxDelta {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

BoxDelta encode(const Box& box, const Anchor& anchor);
// Width/height deltas are clamped to keep exp() bounded.
Box decode(const BoxDelta& delta, const Anchor& anchor);
Anchor anchor_from_box(const Box& box);

}  // namespace wdda

#endif  // WDDA_BOX_HPP_
