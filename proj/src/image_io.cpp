#include "vidswap/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vidswap/error.hpp"

namespace vidswap {

torch::Tensor read_frame(const std::filesystem::path& path, int resolution) {
  if (!std::filesystem::exists(path)) {
    throw FilesystemError("image not found: " + path.string());
  }
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw FormatError("cannot decode image " + path.string());
  if (resolution > 0 && (bgr.rows != resolution || bgr.cols != resolution)) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);
    bgr = resized;
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  std::vector<std::uint8_t> buf(rgb.datastart, rgb.dataend);
  if (!rgb.isContinuous()) {
    buf.clear();
    for (int r = 0; r < rgb.rows; ++r) buf.insert(buf.end(), rgb.ptr(r), rgb.ptr(r) + rgb.cols * 3);
  }
  return rgb8_to_frame(buf, rgb.rows, rgb.cols);
}

std::vector<std::uint8_t> frame_to_rgb8(const torch::Tensor& frame) {
  const auto f = frame.detach().to(torch::kFloat64).contiguous();
  if (f.dim() != 3 || f.size(0) != 3) throw ConfigError("frame must have shape [3, H, W]");
  const int h = static_cast<int>(f.size(1));
  const int w = static_cast<int>(f.size(2));
  const double* src = f.data_ptr<double>();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w * 3);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < h * w; ++i) {
      const double v = std::clamp((src[c * h * w + i] + 1.0) * 127.5, 0.0, 255.0);
      out[static_cast<std::size_t>(i) * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return out;
}

torch::Tensor rgb8_to_frame(const std::vector<std::uint8_t>& rgb, int height, int width) {
  auto out = torch::empty({3, height, width}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  const int plane = height * width;
  for (int i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      dst[c * plane + i] = static_cast<float>(rgb[static_cast<std::size_t>(i) * 3 + c] / 127.5 - 1.0);
    }
  }
  return out;
}

void write_rgb8_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                    int height, int width) {
  cv::Mat img(height, width, CV_8UC3, const_cast<std::uint8_t*>(rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(img, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw FilesystemError("cannot write " + path.string());
}

void write_frame(const std::filesystem::path& path, const torch::Tensor& frame) {
  write_rgb8_png(path, frame_to_rgb8(frame), static_cast<int>(frame.size(1)),
                 static_cast<int>(frame.size(2)));
}

}  // namespace vidswap
