#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bami/geometry.hpp"

namespace bami {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kMaskFill{0, 0, 0};
inline constexpr Rgb kBoxColorOne{0, 255, 0};  // "green box labeled 1"
inline constexpr Rgb kBoxColorTwo{255, 0, 0};  // "red box labeled 2"

// Row-major RGB8 image. Value type: every operation below returns a new
// raster and leaves its inputs untouched.
struct Raster {
    ImageDims dims;
    std::vector<std::uint8_t> data;  // dims.width * dims.height * 3 bytes

    Raster() = default;
    Raster(ImageDims d, Rgb fill);

    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * dims.width + x) * 3;
    }
    Rgb get(int x, int y) const {
        const std::size_t i = index(x, y);
        return Rgb{data[i], data[i + 1], data[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const std::size_t i = index(x, y);
        data[i] = c[0];
        data[i + 1] = c[1];
        data[i + 2] = c[2];
    }

    friend bool operator==(const Raster&, const Raster&) = default;
};

// Grid partition request: rows x cols blocks.
struct GridSpec {
    int rows = 0;
    int cols = 0;

    int block_count() const { return rows * cols; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// PNG or JPEG, sniffed from magic bytes; alpha discarded.
Raster load_image(const std::filesystem::path& path);
Raster decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const Raster& img);
void save_png(const Raster& img, const std::filesystem::path& path);
std::string encode_png_base64(const Raster& img);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// New raster of frame.dims; pixel (u,v) = img pixel (origin+u, origin+v).
Raster crop(const Raster& img, const CropFrame& frame);

// Copy with every pixel inside any region painted kMaskFill. Regions may
// overhang the image; the overhang is ignored.
Raster mask_regions(const Raster& img, std::span<const BBox> regions);

// Exact partition of the image: rows*cols non-overlapping boxes covering
// every pixel; remainder columns/rows go to the last block on each axis.
std::vector<BBox> grid_blocks(ImageDims dims, GridSpec grid);

// 3px inward stroke along the box border plus a small label tag at the
// exterior top-left corner (inside the box when there is no room above).
Raster annotate_box(const Raster& img, const BBox& b, Rgb color, std::string_view label);

} // namespace bami
