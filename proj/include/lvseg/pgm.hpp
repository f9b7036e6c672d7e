#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lvseg/imgcore.hpp"

namespace lvseg::pgm {

/// Raw P5 contents: samples as read, before any interpretation.
struct RawImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::uint32_t maxval = 0;
    std::vector<std::uint16_t> samples;
};

/// Parses a binary (P5) PGM. Comments and arbitrary whitespace in the header are
/// accepted; samples wider than 8 bits are big-endian.
RawImage read(const std::filesystem::path& path);

/// Header-only read: returns height, width and maxval with no samples.
RawImage probe(const std::filesystem::path& path);
RawImage parse(const std::vector<std::uint8_t>& bytes);

/// Writes `samples` as P5 with the given maxval (<= 255 gives 1-byte samples).
void write(const std::filesystem::path& path, std::size_t height, std::size_t width,
           std::uint32_t maxval, const std::vector<std::uint16_t>& samples);

/// Frame I/O: 16-bit samples, multiplied by `scale` on read and divided by it
/// (then rounded and clamped to [0, 65535]) on write.
Image2D read_frame(const std::filesystem::path& path, double scale = 1.0);
void write_frame(const std::filesystem::path& path, const Grid<double>& img, double scale = 1.0);

/// Mask I/O: 8-bit, 0 -> 0 and maxval -> 1; any other sample is an error.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// 8-bit grayscale image from values in [0,1].
void write_gray8(const std::filesystem::path& path, const Grid<double>& img);

using Rgb = std::array<std::uint8_t, 3>;

/// Binary P6, 8 bits per channel.
void write_ppm(const std::filesystem::path& path, const Grid<Rgb>& img);

}  // namespace lvseg::pgm
