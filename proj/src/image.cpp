#include "bami/image.hpp"

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>
#include <png.h>

#include "bami/error.hpp"

namespace bami {

Raster::Raster(ImageDims d, Rgb fill) : dims(d) {
    if (!d.valid()) throw Error(ErrorKind::internal, "raster dims must be at least 1x1");
    data.resize(static_cast<std::size_t>(d.width) * d.height * 3);
    for (std::size_t i = 0; i < data.size(); i += 3) {
        data[i] = fill[0];
        data[i + 1] = fill[1];
        data[i + 2] = fill[2];
    }
}

// ---------------------------------------------------------------------------
// PNG codec (libpng)
// ---------------------------------------------------------------------------

namespace {

struct PngReadState {
    const std::uint8_t* bytes;
    std::size_t size;
    std::size_t pos;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->pos + count > st->size) {
        png_error(png, "read past end of PNG buffer");
    }
    std::memcpy(out, st->bytes + st->pos, count);
    st->pos += count;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void png_flush_noop(png_structp) {}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorKind::internal, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error(ErrorKind::internal, "png_create_info_struct failed");
    }

    Raster img;
    std::vector<png_bytep> rows;
    PngReadState state{bytes.data(), bytes.size(), 0};

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::decode, "corrupt PNG data");
    }

    png_set_read_fn(png, &state, png_read_from_memory);
    png_read_info(png, info);

    // Normalize every color layout to 8-bit RGB, alpha dropped.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    img.dims = ImageDims{width, height};
    img.data.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * width * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

// ---------------------------------------------------------------------------
// JPEG codec (libjpeg)
// ---------------------------------------------------------------------------

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorMgr err{};
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;

    Raster img;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(ErrorKind::decode, "corrupt JPEG data");
    }

    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    const int width = static_cast<int>(cinfo.output_width);
    const int height = static_cast<int>(cinfo.output_height);
    img.dims = ImageDims{width, height};
    img.data.resize(static_cast<std::size_t>(width) * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.data.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

bool has_png_magic(std::span<const std::uint8_t> b) {
    static const std::uint8_t magic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return b.size() >= 8 && std::memcmp(b.data(), magic, 8) == 0;
}

bool has_jpeg_magic(std::span<const std::uint8_t> b) {
    return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

} // namespace

Raster decode_image(std::span<const std::uint8_t> bytes) {
    if (has_png_magic(bytes)) return decode_png(bytes);
    if (has_jpeg_magic(bytes)) return decode_jpeg(bytes);
    throw Error(ErrorKind::decode, "unsupported image format (expected PNG or JPEG)");
}

Raster load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open image file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.empty()) throw Error(ErrorKind::decode, "empty image file: " + path.string());
    return decode_image(bytes);
}

std::vector<std::uint8_t> encode_png(const Raster& img) {
    if (!img.dims.valid()) throw Error(ErrorKind::internal, "cannot encode empty raster");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorKind::internal, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error(ErrorKind::internal, "png_create_info_struct failed");
    }

    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::internal, "PNG encode failed");
    }

    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, img.dims.width, img.dims.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.dims.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.data.data() +
                                                 static_cast<std::size_t>(y) * img.dims.width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void save_png(const Raster& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::string encode_png_base64(const Raster& img) { return base64_encode(encode_png(img)); }

// ---------------------------------------------------------------------------
// base64 (standard alphabet, padded)
// ---------------------------------------------------------------------------

namespace {
constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back(kB64Alphabet[v & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back('=');
        out.push_back('=');
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out.push_back(kB64Alphabet[(v >> 18) & 63]);
        out.push_back(kB64Alphabet[(v >> 12) & 63]);
        out.push_back(kB64Alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::array<int, 256> lut;
    lut.fill(-1);
    for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64Alphabet[i])] = i;

    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = lut[static_cast<unsigned char>(c)];
        if (v < 0) throw Error(ErrorKind::decode, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raster operations
// ---------------------------------------------------------------------------

Raster crop(const Raster& img, const CropFrame& frame) {
    if (!frame.dims.valid() || frame.origin.x < 0 || frame.origin.y < 0 ||
        frame.origin.x + frame.dims.width > img.dims.width ||
        frame.origin.y + frame.dims.height > img.dims.height) {
        throw Error(ErrorKind::internal, "crop frame out of bounds");
    }
    Raster out;
    out.dims = frame.dims;
    out.data.resize(static_cast<std::size_t>(frame.dims.width) * frame.dims.height * 3);
    const std::size_t row_bytes = static_cast<std::size_t>(frame.dims.width) * 3;
    for (int v = 0; v < frame.dims.height; ++v) {
        const std::uint8_t* src = img.data.data() + img.index(frame.origin.x, frame.origin.y + v);
        std::memcpy(out.data.data() + static_cast<std::size_t>(v) * row_bytes, src, row_bytes);
    }
    return out;
}

Raster mask_regions(const Raster& img, std::span<const BBox> regions) {
    Raster out = img;
    for (const BBox& r : regions) {
        const auto clipped = clip_to(r, img.dims);
        if (!clipped) continue;
        for (int y = clipped->y1; y <= clipped->y2; ++y) {
            std::uint8_t* row = out.data.data() + out.index(clipped->x1, y);
            std::memset(row, 0, static_cast<std::size_t>(clipped->width()) * 3);
        }
    }
    return out;
}

std::vector<BBox> grid_blocks(ImageDims dims, GridSpec grid) {
    if (!dims.valid() || grid.rows < 1 || grid.cols < 1 || grid.rows > dims.height ||
        grid.cols > dims.width) {
        throw Error(ErrorKind::config, "grid does not fit image dims");
    }
    const int bw = dims.width / grid.cols;
    const int bh = dims.height / grid.rows;
    std::vector<BBox> blocks;
    blocks.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int r = 0; r < grid.rows; ++r) {
        const int y1 = r * bh;
        const int y2 = (r == grid.rows - 1) ? dims.height - 1 : y1 + bh - 1;
        for (int c = 0; c < grid.cols; ++c) {
            const int x1 = c * bw;
            const int x2 = (c == grid.cols - 1) ? dims.width - 1 : x1 + bw - 1;
            blocks.push_back(BBox{x1, y1, x2, y2});
        }
    }
    return blocks;
}

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

namespace {

constexpr int kStroke = 3;
constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kGlyphScale = 1;
constexpr int kTagPad = 1;

// 5x7 digit glyphs, one row per byte, low 5 bits used.
constexpr std::uint8_t kDigitFont[10][kGlyphH] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

void fill_rect_clipped(Raster& img, const BBox& rect, Rgb color) {
    const auto clipped = clip_to(rect, img.dims);
    if (!clipped) return;
    for (int y = clipped->y1; y <= clipped->y2; ++y) {
        for (int x = clipped->x1; x <= clipped->x2; ++x) {
            img.set(x, y, color);
        }
    }
}

void draw_glyph(Raster& img, int ox, int oy, char ch, Rgb color) {
    if (ch < '0' || ch > '9') return;  // labels are digit strings
    const std::uint8_t* glyph = kDigitFont[ch - '0'];
    for (int gy = 0; gy < kGlyphH; ++gy) {
        for (int gx = 0; gx < kGlyphW; ++gx) {
            if (!(glyph[gy] & (1 << (kGlyphW - 1 - gx)))) continue;
            fill_rect_clipped(img,
                              BBox{ox + gx * kGlyphScale, oy + gy * kGlyphScale,
                                   ox + gx * kGlyphScale + kGlyphScale - 1,
                                   oy + gy * kGlyphScale + kGlyphScale - 1},
                              color);
        }
    }
}

} // namespace

Raster annotate_box(const Raster& img, const BBox& b, Rgb color, std::string_view label) {
    Raster out = img;
    const auto boxOpt = clip_to(b, img.dims);
    if (!boxOpt) return out;
    const BBox box = *boxOpt;

    // Inward stroke: box minus its interior shrunk by kStroke.
    for (int y = box.y1; y <= box.y2; ++y) {
        for (int x = box.x1; x <= box.x2; ++x) {
            const bool on_stroke = (x - box.x1 < kStroke) || (box.x2 - x < kStroke) ||
                                   (y - box.y1 < kStroke) || (box.y2 - y < kStroke);
            if (on_stroke) out.set(x, y, color);
        }
    }

    if (label.empty()) return out;

    const int glyph_w = kGlyphW * kGlyphScale;
    const int glyph_h = kGlyphH * kGlyphScale;
    const int tag_w = static_cast<int>(label.size()) * (glyph_w + kTagPad) + kTagPad;
    const int tag_h = glyph_h + 2 * kTagPad;

    // Tag sits just above the top-left corner; falls back inside the box when
    // the image edge leaves no room.
    int tx = box.x1;
    int ty = box.y1 - tag_h;
    if (ty < 0 || tx + tag_w > img.dims.width) {
        tx = std::min(box.x1 + kStroke, img.dims.width - 1);
        ty = std::min(box.y1 + kStroke, img.dims.height - 1);
    }

    fill_rect_clipped(out, BBox{tx, ty, tx + tag_w - 1, ty + tag_h - 1}, color);
    int cx = tx + kTagPad;
    for (char ch : label) {
        draw_glyph(out, cx, ty + kTagPad, ch, Rgb{0, 0, 0});
        cx += glyph_w + kTagPad;
    }
    return out;
}

} // namespace bami
