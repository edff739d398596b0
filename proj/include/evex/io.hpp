#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "evex/error.hpp"
#include "evex/image.hpp"

namespace evex {

namespace fs = std::filesystem;

/// Writes through a sibling temporary and renames it over `path`.
template <typename Writer>
void write_atomically(const fs::path& path, Writer&& writer)
{
    fs::path tmp = path;
    tmp += ".partial";
    try {
        writer(tmp);
        fs::rename(tmp, path);
    } catch (const fs::filesystem_error& e) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError(IoError::Kind::WriteFailed, "cannot write " + path.string() + ": " + e.what());
    } catch (...) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw;
    }
}

inline void write_text_file(const fs::path& path, const std::string& content)
{
    write_atomically(path, [&](const fs::path& tmp) {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(IoError::Kind::WriteFailed, "cannot open " + path.string() + " for writing");
        out << content;
        out.close();
        if (!out) throw IoError(IoError::Kind::WriteFailed, "write to " + path.string() + " failed");
    });
}

inline std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoError::Kind::FileNotFound, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// PNG

namespace detail {

struct PngHeader {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    int bit_depth = 0;
    int color_type = 0;
};

inline std::uint32_t read_be32(const unsigned char* p)
{
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

inline bool parse_png_header(const std::array<unsigned char, 33>& bytes, PngHeader& header)
{
    static constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (!std::equal(std::begin(kSignature), std::end(kSignature), bytes.begin())) return false;
    if (read_be32(&bytes[8]) != 13 || std::string(reinterpret_cast<const char*>(&bytes[12]), 4) != "IHDR") return false;
    header.width = read_be32(&bytes[16]);
    header.height = read_be32(&bytes[20]);
    header.bit_depth = bytes[24];
    header.color_type = bytes[25];
    return true;
}

struct PngReadState {
    char message[256] = {0};
};

extern "C" inline void png_error_to_state(png_structp png, png_const_charp msg)
{
    auto* state = static_cast<PngReadState*>(png_get_error_ptr(png));
    std::snprintf(state->message, sizeof(state->message), "%s", msg);
    png_longjmp(png, 1);
}

extern "C" inline void png_warning_ignore(png_structp, png_const_charp) {}

// Only C objects live between setjmp and any longjmp out of libpng; the
// output buffer is sized before setjmp is armed.
inline bool decode_png_rgb(std::FILE* file, std::uint32_t width, std::uint32_t height, bool has_alpha,
                           unsigned char* out, PngReadState& state)
{
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_error_to_state, png_warning_ignore);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, file);
    png_read_info(png, info);
    if (has_alpha) png_set_strip_alpha(png);
    const int passes = png_set_interlace_handling(png);
    png_read_update_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * 3;
    for (int pass = 0; pass < passes; ++pass)
        for (std::uint32_t y = 0; y < height; ++y) png_read_row(png, out + y * stride, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

} // namespace detail

/// Decodes an 8-bit RGB or RGBA PNG; alpha is discarded.
inline Image load_png(const fs::path& path)
{
    if (!fs::is_regular_file(path)) throw IoError(IoError::Kind::FileNotFound, "no such file: " + path.string());

    std::array<unsigned char, 33> head{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(IoError::Kind::FileNotFound, "cannot open " + path.string());
        in.read(reinterpret_cast<char*>(head.data()), head.size());
        if (in.gcount() != static_cast<std::streamsize>(head.size()))
            throw IoError(IoError::Kind::MalformedPng, path.string() + ": truncated PNG header");
    }
    detail::PngHeader header;
    if (!detail::parse_png_header(head, header))
        throw IoError(IoError::Kind::MalformedPng, path.string() + ": not a PNG file");
    if (header.bit_depth != 8)
        throw IoError(IoError::Kind::UnsupportedFormat,
                      path.string() + ": unsupported bit depth " + std::to_string(header.bit_depth));
    if (header.color_type != PNG_COLOR_TYPE_RGB && header.color_type != PNG_COLOR_TYPE_RGB_ALPHA)
        throw IoError(IoError::Kind::UnsupportedFormat,
                      path.string() + ": unsupported color type " + std::to_string(header.color_type));
    if (header.width == 0 || header.height == 0 || header.width > (1u << 15) || header.height > (1u << 15))
        throw IoError(IoError::Kind::MalformedPng, path.string() + ": invalid dimensions");

    std::vector<unsigned char> buffer(static_cast<std::size_t>(header.width) * header.height * 3);
    std::FILE* file = std::fopen(path.c_str(), "rb");
    if (!file) throw IoError(IoError::Kind::FileNotFound, "cannot open " + path.string());
    detail::PngReadState state;
    const bool ok = detail::decode_png_rgb(file, header.width, header.height,
                                           header.color_type == PNG_COLOR_TYPE_RGB_ALPHA, buffer.data(), state);
    std::fclose(file);
    if (!ok) throw IoError(IoError::Kind::MalformedPng, path.string() + ": " + state.message);

    std::vector<Rgb> pixels(static_cast<std::size_t>(header.width) * header.height);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = {buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]};
    return Image(static_cast<int>(header.width), static_cast<int>(header.height), std::move(pixels));
}

/// Lossless 8-bit RGB PNG, written atomically.
inline void save_png(const Image& image, const fs::path& path)
{
    std::vector<unsigned char> buffer(image.size() * 3);
    for (std::size_t i = 0; i < image.size(); ++i) {
        buffer[3 * i] = image[i].r;
        buffer[3 * i + 1] = image[i].g;
        buffer[3 * i + 2] = image[i].b;
    }
    write_atomically(path, [&](const fs::path& tmp) {
        png_image img{};
        img.version = PNG_IMAGE_VERSION;
        img.width = static_cast<png_uint_32>(image.width());
        img.height = static_cast<png_uint_32>(image.height());
        img.format = PNG_FORMAT_RGB;
        const int ok = png_image_write_to_file(&img, tmp.c_str(), 0, buffer.data(), 0, nullptr);
        const std::string message = img.message;
        png_image_free(&img);
        if (!ok) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path.string() + ": " + message);
    });
}

// ---------------------------------------------------------------------------
// Text formats
//
//   EVEXMAP 1\n<width> <height>\n<w*h floats, 9 significant digits, row-major>
//   EVEXSEG 1\n<width> <height> <segment_count>\n<w*h labels, row-major>

inline std::string format_grid(const FloatGrid& grid)
{
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << "EVEXMAP 1\n" << grid.width() << ' ' << grid.height() << '\n';
    out << std::setprecision(9);
    for (int y = 0; y < grid.height(); ++y) {
        for (int x = 0; x < grid.width(); ++x) {
            if (x) out << ' ';
            const double v = grid.at(x, y);
            out << (v == 0.0 ? 0.0 : v); // no "-0"
        }
        out << '\n';
    }
    return out.str();
}

inline FloatGrid parse_grid(const std::string& text, const std::string& origin = "<grid>")
{
    std::istringstream in(text);
    in.imbue(std::locale::classic());
    std::string magic;
    int version = 0;
    int w = 0;
    int h = 0;
    if (!(in >> magic >> version) || magic != "EVEXMAP" || version != 1)
        throw IoError(IoError::Kind::MalformedText, origin + ": missing EVEXMAP 1 header");
    if (!(in >> w >> h) || w < 1 || h < 1) throw IoError(IoError::Kind::MalformedText, origin + ": bad dimensions");
    std::vector<double> values(static_cast<std::size_t>(w) * h);
    for (auto& v : values) {
        if (!(in >> v) || !std::isfinite(v))
            throw IoError(IoError::Kind::MalformedText, origin + ": missing or non-finite value");
    }
    std::string extra;
    if (in >> extra) throw IoError(IoError::Kind::MalformedText, origin + ": trailing data");
    return FloatGrid(w, h, std::move(values));
}

inline void save_grid(const FloatGrid& grid, const fs::path& path) { write_text_file(path, format_grid(grid)); }

inline FloatGrid load_grid(const fs::path& path) { return parse_grid(read_text_file(path), path.string()); }

inline std::string format_segmap(const SegmentMap& segmap)
{
    std::ostringstream out;
    out << "EVEXSEG 1\n" << segmap.width << ' ' << segmap.height << ' ' << segmap.segment_count << '\n';
    for (int y = 0; y < segmap.height; ++y) {
        for (int x = 0; x < segmap.width; ++x) {
            if (x) out << ' ';
            out << segmap.label(x, y);
        }
        out << '\n';
    }
    return out.str();
}

inline SegmentMap parse_segmap(const std::string& text, const std::string& origin = "<segmap>")
{
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    SegmentMap m;
    if (!(in >> magic >> version) || magic != "EVEXSEG" || version != 1)
        throw IoError(IoError::Kind::MalformedText, origin + ": missing EVEXSEG 1 header");
    if (!(in >> m.width >> m.height >> m.segment_count) || m.width < 1 || m.height < 1 || m.segment_count < 1)
        throw IoError(IoError::Kind::MalformedText, origin + ": bad header values");
    m.labels.resize(static_cast<std::size_t>(m.width) * m.height);
    std::vector<bool> seen(static_cast<std::size_t>(m.segment_count), false);
    for (auto& l : m.labels) {
        if (!(in >> l) || l < 0 || l >= m.segment_count)
            throw IoError(IoError::Kind::MalformedText, origin + ": missing or out-of-range label");
        seen[static_cast<std::size_t>(l)] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw IoError(IoError::Kind::MalformedText, origin + ": labels are not dense");
    return m;
}

inline void save_segmap(const SegmentMap& segmap, const fs::path& path)
{
    write_text_file(path, format_segmap(segmap));
}

inline SegmentMap load_segmap(const fs::path& path) { return parse_segmap(read_text_file(path), path.string()); }

} // namespace evex
