#pragma once

// 8-bit RGB image loading and saving. PNG (greyscale, RGB and RGBA sources,
// 8-bit depth, non-interlaced) and binary PPM (P6). Everything is widened to
// RGB on load; alpha is dropped.

#include <cstdint>
#include <string>
#include <vector>

#include "esrkit/tensor.hpp"

namespace esrkit {

struct Image8 {
    int w = 0, h = 0;
    std::vector<std::uint8_t> rgb;  // h*w*3, row-major, interleaved

    Image8() = default;
    Image8(int width, int height) : w(width), h(height), rgb(std::size_t(width) * height * 3) {
        require(width >= 1 && height >= 1, "image: dimensions must be positive");
    }
    std::uint8_t& at(int y, int x, int c) { return rgb[(std::size_t(y) * w + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return rgb[(std::size_t(y) * w + x) * 3 + c]; }
};

Image8 decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Image8& img);

Image8 decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image8& img);

// Dispatches on extension (.png / .ppm, case-insensitive).
Image8 load_image(const std::string& path);
void save_image(const std::string& path, const Image8& img);

// (1, 3, h, w) float tensor in [0, 1] <-> 8-bit image. to_image rounds half
// away from zero and clamps to [0, 255].
Tensor to_tensor(const Image8& img);
Image8 to_image(const Tensor& t);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace esrkit
