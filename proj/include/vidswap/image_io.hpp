#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace vidswap {

/// Reads an RGB image as a float tensor [3, H, W] with values in [-1, 1].
/// When `resolution` > 0 the image is resized (aspect distorted) to
/// resolution x resolution with area interpolation.
torch::Tensor read_frame(const std::filesystem::path& path, int resolution = 0);

/// Writes a [3, H, W] tensor with values in [-1, 1] as an 8-bit RGB PNG.
void write_frame(const std::filesystem::path& path, const torch::Tensor& frame);

/// Quantizes a [3, H, W] frame to interleaved 8-bit RGB (row-major HWC).
std::vector<std::uint8_t> frame_to_rgb8(const torch::Tensor& frame);
torch::Tensor rgb8_to_frame(const std::vector<std::uint8_t>& rgb, int height, int width);

void write_rgb8_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb,
                    int height, int width);

}  // namespace vidswap
