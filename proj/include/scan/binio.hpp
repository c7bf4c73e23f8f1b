#pragma once

// Little-endian binary primitives shared by all file formats. Values are
// assembled byte by byte so the layout is identical on any host.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "scan/errors.hpp"

namespace scan::io {

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw Io("write failed");
}

inline void read_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) throw Io("unexpected end of file");
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_bytes(out, &v, 1); }

inline std::uint8_t read_u8(std::istream& in) {
    std::uint8_t v = 0;
    read_bytes(in, &v, 1);
    return v;
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    write_bytes(out, b, 2);
}

inline std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    read_bytes(in, b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(out, b, 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    read_bytes(in, b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(out, b, 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    read_bytes(in, b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_i32(std::ostream& out, std::int32_t v) {
    write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline std::int32_t read_i32(std::istream& in) {
    return std::bit_cast<std::int32_t>(read_u32(in));
}

inline void write_f32(std::ostream& out, float v) {
    write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline void write_magic(std::ostream& out, const char (&magic)[5]) {
    write_bytes(out, magic, 4);
}

// Throws FormatVersion when the magic does not match (file is some other
// format entirely) and Io when the stream ends early.
inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char got[4];
    read_bytes(in, got, 4);
    for (int i = 0; i < 4; ++i) {
        if (got[i] != magic[i]) {
            throw FormatVersion(std::string("bad magic, expected ") + magic);
        }
    }
}

inline void expect_version(std::istream& in, std::uint8_t version) {
    const std::uint8_t got = read_u8(in);
    if (got != version) {
        throw FormatVersion("unsupported format version " + std::to_string(int(got)) +
                            ", expected " + std::to_string(int(version)));
    }
}

// Call after the last field of a reader: any trailing byte means the file
// does not match the header it announced.
inline void expect_eof(std::istream& in) {
    if (in.peek() != std::char_traits<char>::eof()) throw Io("trailing bytes after payload");
}

}  // namespace scan::io
