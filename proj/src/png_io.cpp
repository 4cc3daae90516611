#include "ibsr/core/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>

#include "ibsr/core/binio.hpp"
#include "ibsr/core/error.hpp"

namespace ibsr {

namespace {

constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& payload) {
    put_u32be(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_u32be(out, crc);
}

std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> buf(bound);
    // Fixed level keeps encoded bytes identical run to run.
    int rc = compress2(buf.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6);
    if (rc != Z_OK) raise(ErrorKind::Io, "zlib deflate failed");
    buf.resize(bound);
    return buf;
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& compressed, std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf out_len = static_cast<uLongf>(expected);
    int rc = uncompress(out.data(), &out_len, compressed.data(), static_cast<uLong>(compressed.size()));
    if (rc != Z_OK || out_len != expected) raise(ErrorKind::Io, "zlib inflate failed or size mismatch");
    return out;
}

std::vector<std::uint8_t> make_png(int width, int height, int bit_depth, int color_type,
                                   const std::vector<std::uint8_t>& filtered_rows) {
    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(width));
    put_u32be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(static_cast<std::uint8_t>(bit_depth));
    ihdr.push_back(static_cast<std::uint8_t>(color_type));
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter method
    ihdr.push_back(0); // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_deflate(filtered_rows));
    append_chunk(out, "IEND", {});
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        raise(ErrorKind::Validation, "encode_png supports 1 or 3 channels");
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
        raise(ErrorKind::Validation, "encode_png: inconsistent image dimensions");
    const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((rowbytes + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter: none
        const std::uint8_t* row = img.pixels.data() + static_cast<std::size_t>(y) * rowbytes;
        raw.insert(raw.end(), row, row + rowbytes);
    }
    return make_png(img.width, img.height, 8, img.channels == 1 ? 0 : 2, raw);
}

std::vector<std::uint8_t> encode_png_mask1(const std::vector<std::uint8_t>& mask, int width, int height) {
    if (mask.size() != static_cast<std::size_t>(width) * height)
        raise(ErrorKind::Validation, "encode_png_mask1: inconsistent dimensions");
    const std::size_t rowbytes = static_cast<std::size_t>((width + 7) / 8);
    std::vector<std::uint8_t> raw;
    raw.reserve((rowbytes + 1) * height);
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        std::size_t base = raw.size();
        raw.resize(base + rowbytes, 0);
        for (int x = 0; x < width; ++x)
            if (mask[static_cast<std::size_t>(y) * width + x])
                raw[base + static_cast<std::size_t>(x) / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
    }
    return make_png(width, height, 1, 0, raw);
}

ImageU8 decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        raise(ErrorKind::Io, "not a PNG file");

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        const std::uint32_t len = get_u32be(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) raise(ErrorKind::Io, "truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const std::uint8_t* payload = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = static_cast<int>(get_u32be(payload));
            height = static_cast<int>(get_u32be(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) raise(ErrorKind::Io, "interlaced PNG not supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || width <= 0 || height <= 0) raise(ErrorKind::Io, "bad PNG header");

    int in_channels;
    switch (color_type) {
        case 0: in_channels = 1; break;
        case 2: in_channels = 3; break;
        case 6: in_channels = 4; break;
        default: raise(ErrorKind::Io, "unsupported PNG color type");
    }
    if (!((bit_depth == 8) || (bit_depth == 1 && color_type == 0)))
        raise(ErrorKind::Io, "unsupported PNG bit depth");

    const std::size_t rowbits = static_cast<std::size_t>(width) * in_channels * bit_depth;
    const std::size_t rowbytes = (rowbits + 7) / 8;
    std::vector<std::uint8_t> raw = zlib_inflate(idat, (rowbytes + 1) * height);

    // Undo per-row filters in place; bpp = filter unit in bytes.
    const int bpp = std::max(1, in_channels * bit_depth / 8);
    std::vector<std::uint8_t> prev(rowbytes, 0);
    std::vector<std::uint8_t> cur(rowbytes);
    std::vector<std::uint8_t> unfiltered(rowbytes * height);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (rowbytes + 1)];
        const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (rowbytes + 1) + 1];
        std::copy(src, src + rowbytes, cur.begin());
        for (std::size_t i = 0; i < rowbytes; ++i) {
            const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            switch (filter) {
                case 0: break;
                case 1: cur[i] = static_cast<std::uint8_t>(cur[i] + a); break;
                case 2: cur[i] = static_cast<std::uint8_t>(cur[i] + b); break;
                case 3: cur[i] = static_cast<std::uint8_t>(cur[i] + (a + b) / 2); break;
                case 4: cur[i] = static_cast<std::uint8_t>(cur[i] + paeth(a, b, c)); break;
                default: raise(ErrorKind::Io, "bad PNG filter type");
            }
        }
        std::copy(cur.begin(), cur.end(), unfiltered.begin() + static_cast<std::size_t>(y) * rowbytes);
        std::swap(prev, cur);
    }

    ImageU8 img;
    img.width = width;
    img.height = height;
    img.channels = in_channels == 4 ? 3 : in_channels;
    img.pixels.resize(static_cast<std::size_t>(width) * height * img.channels);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = unfiltered.data() + static_cast<std::size_t>(y) * rowbytes;
        for (int x = 0; x < width; ++x) {
            if (bit_depth == 1) {
                const std::uint8_t bit = (row[x / 8] >> (7 - x % 8)) & 1;
                img.pixels[static_cast<std::size_t>(y) * width + x] = bit ? 255 : 0;
            } else {
                for (int c = 0; c < img.channels; ++c)
                    img.pixels[(static_cast<std::size_t>(y) * width + x) * img.channels + c] =
                        row[static_cast<std::size_t>(x) * in_channels + c];
            }
        }
    }
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    auto bytes = encode_png(img);
    write_file_bytes(path, bytes.data(), bytes.size());
}

void write_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width, int height) {
    auto bytes = encode_png_mask1(mask, width, height);
    write_file_bytes(path, bytes.data(), bytes.size());
}

ImageU8 read_png(const std::string& path) {
    return decode_png(read_file_bytes(path));
}

ImageU8 to_u8(const TensorF& chw) {
    if (chw.rank() != 3) raise(ErrorKind::Validation, "to_u8 expects CHW tensor");
    ImageU8 img;
    img.channels = chw.dim(0);
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float v = chw(c, y, x);
                v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
                img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    return img;
}

TensorF to_float(const ImageU8& img) {
    TensorF t({img.channels, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                t(c, y, x) = static_cast<float>(img.at(y, x, c)) / 255.0f;
    return t;
}

} // namespace ibsr
