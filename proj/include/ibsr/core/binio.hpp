#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ibsr/core/error.hpp"

namespace ibsr {

/// Little-endian binary writer over an ostream. All on-disk integer fields in
/// this project are little-endian regardless of host order.
class BinWriter {
public:
    explicit BinWriter(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        le(bits);
    }

    void bytes(const void* p, std::size_t n) { raw(p, n); }

    void str16(const std::string& s) {
        if (s.size() > 0xffff) raise(ErrorKind::Validation, "string too long for u16 length prefix");
        u16(static_cast<std::uint16_t>(s.size()));
        raw(s.data(), s.size());
    }

    void str32(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void f32_array(const float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }

private:
    template <typename T>
    void le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        raw(buf, sizeof(T));
    }
    void raw(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

    std::ostream& os_;
};

class BinReader {
public:
    explicit BinReader(std::istream& is) : is_(is) {}

    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint16_t u16() { return le<std::uint16_t>(); }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    float f32() {
        std::uint32_t bits = le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    void bytes(void* p, std::size_t n) { raw(p, n); }

    std::string str16() {
        std::string s(u16(), '\0');
        raw(s.data(), s.size());
        return s;
    }

    std::string str32() {
        std::string s(u32(), '\0');
        raw(s.data(), s.size());
        return s;
    }

    void f32_array(float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f32();
    }

private:
    template <typename T>
    T le() {
        unsigned char buf[sizeof(T)];
        raw(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }
    void raw(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!is_) raise(ErrorKind::Io, "unexpected end of binary stream");
    }

    std::istream& is_;
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorKind::Io, "cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::vector<unsigned char> buf(static_cast<std::size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) raise(ErrorKind::Io, "failed reading file: " + path);
    return buf;
}

inline void write_file_bytes(const std::string& path, const void* data, std::size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorKind::Io, "cannot open file for writing: " + path);
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) raise(ErrorKind::Io, "failed writing file: " + path);
}

inline std::string read_text_file(const std::string& path) {
    auto b = read_file_bytes(path);
    return std::string(b.begin(), b.end());
}

inline void write_text_file(const std::string& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

} // namespace ibsr
