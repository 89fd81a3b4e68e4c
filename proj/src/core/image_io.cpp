#include "cloak/core/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace cloak {

Tensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("image file not found: " + path.string());
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw std::runtime_error("cannot decode image: " + path.string());
  if (raw.channels() != 3) {
    throw std::runtime_error("not an RGB image (" + std::to_string(raw.channels()) +
                             " channels): " + path.string());
  }
  double scale = 0.0;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw std::runtime_error("unsupported bit depth: " + path.string());
  }
  cv::Mat rgb;
  cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  cv::Mat real;
  rgb.convertTo(real, CV_64FC3, scale);

  Tensor out = Tensor::image(real.rows, real.cols);
  for (int y = 0; y < real.rows; ++y) {
    const auto* row = real.ptr<cv::Vec3d>(y);
    for (int x = 0; x < real.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = row[x][c];
    }
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Tensor& image, BitDepth depth) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw std::invalid_argument("write_image expects an HxWx3 tensor");
  }
  const bool wide = depth == BitDepth::k16;
  const double levels = wide ? 65535.0 : 255.0;
  cv::Mat bgr(image.height(), image.width(), wide ? CV_16UC3 : CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        const auto q = static_cast<int>(std::lround(v * levels));
        if (wide) {
          bgr.at<cv::Vec3w>(y, x)[2 - c] = static_cast<std::uint16_t>(q);
        } else {
          bgr.at<cv::Vec3b>(y, x)[2 - c] = static_cast<std::uint8_t>(q);
        }
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) {
    throw std::runtime_error("cannot write image: " + path.string());
  }
}

}  // namespace cloak
