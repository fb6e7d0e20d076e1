#include "dp/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace dp {

namespace {

void put_u32_be(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
    put_u32_be(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32_be(out, crc);
}

std::vector<unsigned char> deflate_raw(const std::vector<unsigned char>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> z(bound);
    if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png: zlib compress failed");
    z.resize(bound);
    return z;
}

// raw = per-scanline filter byte 0 + pixel bytes
void write_png(const std::string& path, int w, int h, int bit_depth, int color_type,
               const std::vector<unsigned char>& raw) {
    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(w));
    put_u32_be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(static_cast<unsigned char>(bit_depth));
    ihdr.push_back(static_cast<unsigned char>(color_type));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", deflate_raw(raw));
    put_chunk(out, "IEND", {});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("png: write failed for " + path);
}

unsigned char to_byte(float v, float lo, float hi) {
    double t = (static_cast<double>(v) - lo) / (hi - lo);
    t = std::clamp(t, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(t * 255.0));
}

}  // namespace

void write_png_rgb(const std::string& path, const TensorF& image) {
    if (image.shape.size() != 3 || image.shape[0] != 3)
        throw std::invalid_argument("write_png_rgb: want [3,H,W]");
    const int h = image.shape[1], w = image.shape[2];
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + 3 * static_cast<size_t>(w)));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                raw.push_back(to_byte(image.v[(static_cast<size_t>(c) * h + y) * w + x], -1.0f, 1.0f));
    }
    write_png(path, w, h, 8, 2, raw);
}

void write_png_gray(const std::string& path, const TensorF& map) {
    if (map.shape.size() != 2) throw std::invalid_argument("write_png_gray: want [H,W]");
    const int h = map.shape[0], w = map.shape[1];
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w)));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x)
            raw.push_back(to_byte(map.v[static_cast<size_t>(y) * w + x], 0.0f, 1.0f));
    }
    write_png(path, w, h, 8, 0, raw);
}

void write_png_mask(const std::string& path, const TensorF& mask) {
    if (mask.shape.size() != 2) throw std::invalid_argument("write_png_mask: want [H,W]");
    const int h = mask.shape[0], w = mask.shape[1];
    std::vector<unsigned char> raw;
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        unsigned char byte = 0;
        int nbits = 0;
        for (int x = 0; x < w; ++x) {
            byte = static_cast<unsigned char>((byte << 1) |
                                              (mask.v[static_cast<size_t>(y) * w + x] > 0.5f ? 1 : 0));
            if (++nbits == 8) {
                raw.push_back(byte);
                byte = 0;
                nbits = 0;
            }
        }
        if (nbits > 0) raw.push_back(static_cast<unsigned char>(byte << (8 - nbits)));
    }
    write_png(path, w, h, 1, 0, raw);
}

}  // namespace dp
