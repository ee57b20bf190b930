#pragma once

// Image files: 8-bit camera images in, 16-bit depth PNGs (depth * 256, the
// KITTI depth encoding) and 8-bit debug graymaps out. Backed by OpenCV.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lccal/error.hpp"
#include "lccal/projection.hpp"
#include "lccal/tensor.hpp"

namespace lccal {

/// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h) : width(w), height(h), data(w * h * 3, 0) {}

  std::uint8_t& at(std::size_t u, std::size_t v, std::size_t c) { return data[(v * width + u) * 3 + c]; }
  std::uint8_t at(std::size_t u, std::size_t v, std::size_t c) const { return data[(v * width + u) * 3 + c]; }

  bool operator==(const RgbImage&) const = default;
};

/// (3, H, W) tensor with values in [0, 1].
inline Tensor rgb_tensor(const RgbImage& img) {
  const std::size_t hw = img.width * img.height;
  std::vector<double> v(3 * hw);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[c * hw + i] = img.data[i * 3 + c] / 255.0;
  return {Shape{3, img.height, img.width}, std::move(v)};
}

/// Grayscale inputs are replicated to three channels; alpha is dropped.
inline RgbImage read_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image '" + path + "'");
  cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  RgbImage img(static_cast<std::size_t>(m.cols), static_cast<std::size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    std::copy(row, row + m.cols * 3, img.data.begin() + static_cast<std::ptrdiff_t>(r) * m.cols * 3);
  }
  return img;
}

inline void write_image(const std::string& path, const RgbImage& img) {
  cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3,
            const_cast<std::uint8_t*>(img.data.data()));
  cv::Mat bgr;
  cv::cvtColor(m, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw IoError("cannot write image '" + path + "'");
}

inline RgbImage resize_image(const RgbImage& img, std::size_t width, std::size_t height) {
  if (img.width == width && img.height == height) return img;
  cv::Mat src(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3,
              const_cast<std::uint8_t*>(img.data.data()));
  cv::Mat dst;
  const bool shrink = width < img.width && height < img.height;
  cv::resize(src, dst, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0,
             shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  RgbImage out(width, height);
  std::copy(dst.data, dst.data + out.data.size(), out.data.begin());
  return out;
}

inline constexpr double kDepthPngScale = 256.0;

/// 16-bit PNG of round(depth * 256), saturating at 65535; 0 stays "no return".
inline void write_depth_png(const std::string& path, const DepthImage& d) {
  cv::Mat m(static_cast<int>(d.height), static_cast<int>(d.width), CV_16UC1);
  for (std::size_t v = 0; v < d.height; ++v) {
    auto* row = m.ptr<std::uint16_t>(static_cast<int>(v));
    for (std::size_t u = 0; u < d.width; ++u) {
      const double q = std::round(d.at(u, v) * kDepthPngScale);
      row[u] = static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
    }
  }
  if (!cv::imwrite(path, m)) throw IoError("cannot write depth image '" + path + "'");
}

inline DepthImage read_depth_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_ANYDEPTH);
  if (m.empty()) throw IoError("cannot read depth image '" + path + "'");
  if (m.type() != CV_16UC1) throw FormatError("depth image '" + path + "' is not 16-bit single channel", 0);
  DepthImage d(static_cast<std::size_t>(m.cols), static_cast<std::size_t>(m.rows));
  for (std::size_t v = 0; v < d.height; ++v) {
    const auto* row = m.ptr<std::uint16_t>(static_cast<int>(v));
    for (std::size_t u = 0; u < d.width; ++u) d.at(u, v) = row[u] / kDepthPngScale;
  }
  return d;
}

/// 8-bit graymap (format chosen by extension, e.g. .pgm or .png).
inline void write_gray_u8(const std::string& path, std::size_t width, std::size_t height,
                          const std::vector<std::uint8_t>& pixels) {
  cv::Mat m(static_cast<int>(height), static_cast<int>(width), CV_8UC1, const_cast<std::uint8_t*>(pixels.data()));
  if (!cv::imwrite(path, m)) throw IoError("cannot write image '" + path + "'");
}

/// Debug render: near points bright, far points dark, empty pixels black.
inline void write_depth_preview(const std::string& path, const DepthImage& d, double max_depth = kDefaultMaxDepth) {
  std::vector<std::uint8_t> px(d.depth.size(), 0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (d.depth[i] <= 0.0) continue;
    const double t = std::min(d.depth[i], max_depth) / max_depth;
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 - 235.0 * t));
  }
  write_gray_u8(path, d.width, d.height, px);
}

}  // namespace lccal
