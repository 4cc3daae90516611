#pragma once

#include <cstdint>
#include <vector>

#include "ibsr/core/error.hpp"
#include "ibsr/core/tensor.hpp"

namespace ibsr {

/// Bilinear resize of a CHW image.
inline TensorF resize_bilinear(const TensorF& src, int out_h, int out_w) {
    if (src.rank() != 3) raise(ErrorKind::Validation, "resize_bilinear expects CHW");
    const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    if (h == out_h && w == out_w) return src;
    TensorF dst({c, out_h, out_w});
    const float sy = static_cast<float>(h) / out_h, sx = static_cast<float>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const float fy = (y + 0.5f) * sy - 0.5f;
        const int y0 = std::max(0, std::min(h - 1, static_cast<int>(std::floor(fy))));
        const int y1 = std::min(h - 1, y0 + 1);
        const float wy = std::max(0.0f, std::min(1.0f, fy - y0));
        for (int x = 0; x < out_w; ++x) {
            const float fx = (x + 0.5f) * sx - 0.5f;
            const int x0 = std::max(0, std::min(w - 1, static_cast<int>(std::floor(fx))));
            const int x1 = std::min(w - 1, x0 + 1);
            const float wx = std::max(0.0f, std::min(1.0f, fx - x0));
            for (int ci = 0; ci < c; ++ci) {
                const float top = src(ci, y0, x0) * (1 - wx) + src(ci, y0, x1) * wx;
                const float bot = src(ci, y1, x0) * (1 - wx) + src(ci, y1, x1) * wx;
                dst(ci, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

/// Nearest-neighbor downsample of a binary mask to (out_h, out_w).
inline std::vector<float> downsample_mask_nearest(const std::vector<std::uint8_t>& mask, int h, int w,
                                                  int out_h, int out_w) {
    std::vector<float> out(static_cast<std::size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(h - 1, static_cast<int>((y + 0.5f) * h / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(w - 1, static_cast<int>((x + 0.5f) * w / out_w));
            out[static_cast<std::size_t>(y) * out_w + x] =
                mask[static_cast<std::size_t>(sy) * w + sx] ? 1.0f : 0.0f;
        }
    }
    return out;
}

/// Re-encodes a normal map for embedding towers: background (zero-normal
/// gray) pixels become black, matching the black background of shaded and
/// synthesized views. Foreground is detected by decoded normal magnitude, so
/// PNG quantization of the gray level does not matter.
inline TensorF normal_view_black_background(const TensorF& view) {
    TensorF out = view;
    const int h = view.dim(1), w = view.dim(2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float nx = 2 * view(0, y, x) - 1, ny = 2 * view(1, y, x) - 1,
                        nz = 2 * view(2, y, x) - 1;
            if (nx * nx + ny * ny + nz * nz < 0.25f) {
                out(0, y, x) = 0;
                out(1, y, x) = 0;
                out(2, y, x) = 0;
            }
        }
    return out;
}

/// Zeroes background pixels of an image given its foreground mask.
inline TensorF apply_mask(const TensorF& image, const std::vector<std::uint8_t>& mask) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (mask.size() != static_cast<std::size_t>(h) * w)
        raise(ErrorKind::Validation, "apply_mask: mask size mismatch");
    TensorF out = image;
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (!mask[static_cast<std::size_t>(y) * w + x]) out(ci, y, x) = 0.0f;
    return out;
}

} // namespace ibsr
