#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibsr/core/tensor.hpp"

namespace ibsr {

/// 8-bit image, row-major HWC. channels: 1 = grayscale, 3 = RGB.
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

// Minimal PNG codec over zlib. Writes 8-bit grayscale/RGB and 1-bit grayscale
// (for masks); reads 1/8-bit grayscale, 8-bit RGB and RGBA (alpha dropped).
// No interlacing, no palettes.
std::vector<std::uint8_t> encode_png(const ImageU8& img);
std::vector<std::uint8_t> encode_png_mask1(const std::vector<std::uint8_t>& mask, int width, int height);
ImageU8 decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::string& path, const ImageU8& img);
void write_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width, int height);
ImageU8 read_png(const std::string& path);

/// CHW float [0,1] -> HWC u8 with round-to-nearest.
ImageU8 to_u8(const TensorF& chw);
/// HWC u8 -> CHW float in [0,1].
TensorF to_float(const ImageU8& img);

} // namespace ibsr
