#pragma once

// Local correlation layer between RGB and depth feature maps.
//
// For a search radius d the output has (2d+1)^2 channels, one per displacement
// delta = (dy, dx) with |dy|, |dx| <= d, ordered row-major:
//   slot(dy, dx) = (dy + d) * (2d + 1) + (dx + d).
// Entry [slot, y, x] = (1/C) * sum_c rgb[c, y, x] * lidar[c, y + dy, x + dx],
// and exactly 0 where (y + dy, x + dx) falls outside the map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "lccal/error.hpp"
#include "lccal/tensor.hpp"

namespace lccal {

inline std::size_t correlation_channels(std::size_t radius) { return (2 * radius + 1) * (2 * radius + 1); }

inline Tensor correlation(const Tensor& x_rgb, const Tensor& x_lidar, std::size_t radius) {
  detail::require_rank("correlation", x_rgb, 3, "rgb features");
  detail::require_same_shape("correlation", x_rgb, x_lidar);
  const std::size_t c = x_rgb.dim(0), h = x_rgb.dim(1), w = x_rgb.dim(2);
  if (c == 0) throw ShapeError("correlation: zero feature channels");
  const auto r = static_cast<std::ptrdiff_t>(radius);
  const std::size_t side = 2 * radius + 1, slots = side * side, hw = h * w;
  const double inv_c = 1.0 / static_cast<double>(c);

  // Visits every in-bounds (slot, p1, p2) triple in a fixed order.
  auto for_each_pair = [=](auto&& fn) {
    for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
      for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
        const std::size_t slot = static_cast<std::size_t>((dy + r) * static_cast<std::ptrdiff_t>(side) + (dx + r));
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t y2 = static_cast<std::ptrdiff_t>(y) + dy;
          if (y2 < 0 || y2 >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t x2 = static_cast<std::ptrdiff_t>(x) + dx;
            if (x2 < 0 || x2 >= static_cast<std::ptrdiff_t>(w)) continue;
            fn(slot * hw + y * w + x, y * w + x, static_cast<std::size_t>(y2) * w + static_cast<std::size_t>(x2));
          }
        }
      }
    }
  };

  const double* a = x_rgb.data().data();
  const double* b = x_lidar.data().data();
  std::vector<double> out(slots * hw, 0.0);
  for_each_pair([&](std::size_t o, std::size_t p1, std::size_t p2) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += a[k * hw + p1] * b[k * hw + p2];
    out[o] = s * inv_c;
  });

  return detail::make_result({slots, h, w}, std::move(out), {x_rgb, x_lidar},
                             [=](std::span<const double> g, auto pg) {
                               const double* a = x_rgb.data().data();
                               const double* b = x_lidar.data().data();
                               for_each_pair([&](std::size_t o, std::size_t p1, std::size_t p2) {
                                 const double go = g[o] * inv_c;
                                 if (go == 0.0) return;
                                 if (!pg[0].empty())
                                   for (std::size_t k = 0; k < c; ++k) pg[0][k * hw + p1] += go * b[k * hw + p2];
                                 if (!pg[1].empty())
                                   for (std::size_t k = 0; k < c; ++k) pg[1][k * hw + p2] += go * a[k * hw + p1];
                               });
                             });
}

/// One displacement slice of a cost volume, min-max scaled to 8-bit
/// (row-major, h x w) for visual inspection.
inline std::vector<std::uint8_t> cost_volume_slice_u8(const Tensor& cv, std::size_t slot) {
  detail::require_rank("cost_volume_slice_u8", cv, 3, "cost volume");
  if (slot >= cv.dim(0)) throw ShapeError("cost volume has no slot " + std::to_string(slot));
  const std::size_t hw = cv.dim(1) * cv.dim(2);
  const auto slice = cv.data().subspan(slot * hw, hw);
  const auto [lo, hi] = std::minmax_element(slice.begin(), slice.end());
  std::vector<std::uint8_t> out(hw, 0);
  const double range = *hi - *lo;
  if (range > 0.0)
    for (std::size_t i = 0; i < hw; ++i)
      out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (slice[i] - *lo) / range));
  return out;
}

}  // namespace lccal
