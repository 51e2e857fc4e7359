// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/image.hpp>

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace agsplat {

namespace {

std::uint8_t
to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void
png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
    auto *out = static_cast<std::string *>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char *>(data), length);
}

void
png_flush_noop(png_structp) {}

struct PngReadSource {
    const std::string *bytes;
    std::size_t offset;
};

void
png_read_from_string(png_structp png, png_bytep data, png_size_t length) {
    auto *src = static_cast<PngReadSource *>(png_get_io_ptr(png));
    if (src->offset + length > src->bytes->size()) png_error(png, "truncated PNG");
    std::memcpy(data, src->bytes->data() + src->offset, length);
    src->offset += length;
}

std::string
encode_png_bytes(int width, int height, int channels, const std::vector<std::uint8_t> &pixels) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorCode::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::string out;
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        throw Error(ErrorCode::Io, "PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
    png_set_IHDR(png,
                 info,
                 png_uint_32(width),
                 png_uint_32(height),
                 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        auto row = const_cast<png_bytep>(pixels.data() + std::size_t(y) * std::size_t(width * channels));
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void
write_file(const std::filesystem::path &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string
read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void
put_u32_le(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xffu));
}

std::uint32_t
get_u32_le(const std::string &in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(in[at + std::size_t(i)])) << (8 * i);
    return v;
}

std::string
pgm16(int width, int height, const std::vector<std::uint16_t> &values, const std::string &comment) {
    std::ostringstream out;
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << width << ' ' << height << "\n65535\n";
    std::string bytes = out.str();
    for (auto v : values) {
        bytes.push_back(char(v >> 8)); // PGM samples are big-endian
        bytes.push_back(char(v & 0xff));
    }
    return bytes;
}

} // namespace

std::size_t
count_set(const Mask &mask) {
    return std::size_t(std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

std::string
encode_png(const ImageD &image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw Error(ErrorCode::InvalidInput, "PNG export supports 1 or 3 channels");
    }
    std::vector<std::uint8_t> bytes(image.data().size());
    std::transform(image.data().begin(), image.data().end(), bytes.begin(), to_byte);
    return encode_png_bytes(image.width(), image.height(), image.channels(), bytes);
}

std::string
encode_png(const Mask &mask) {
    std::vector<std::uint8_t> bytes(mask.data().size());
    std::transform(mask.data().begin(), mask.data().end(), bytes.begin(), [](auto v) {
        return std::uint8_t(v ? 255 : 0);
    });
    return encode_png_bytes(mask.width(), mask.height(), 1, bytes);
}

void
write_png(const std::filesystem::path &path, const ImageD &image) {
    write_file(path, encode_png(image));
}

void
write_png(const std::filesystem::path &path, const Mask &mask) {
    write_file(path, encode_png(mask));
}

ImageD
decode_png(const std::string &bytes) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error(ErrorCode::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw Error(ErrorCode::Io, "PNG decoding failed");
    }
    PngReadSource src{&bytes, 0};
    png_set_read_fn(png, &src, png_read_from_string);
    png_read_info(png, info);
    const int width  = int(png_get_image_width(png, info));
    const int height = int(png_get_image_height(png, info));
    const int type   = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) != 8 || (type != PNG_COLOR_TYPE_GRAY && type != PNG_COLOR_TYPE_RGB)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::Io, "only 8-bit gray or RGB PNG is supported");
    }
    const int channels = type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    std::vector<std::uint8_t> row(std::size_t(width * channels));
    ImageD image(width, height, channels);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) image(x, y, c) = row[std::size_t(x * channels + c)] / 255.0;
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void
write_pgm(const std::filesystem::path &path, const Mask &mask) {
    std::vector<std::uint16_t> values(mask.data().size());
    std::transform(mask.data().begin(), mask.data().end(), values.begin(), [](auto v) {
        return std::uint16_t(v ? 65535 : 0);
    });
    write_file(path, pgm16(mask.width(), mask.height(), values, {}));
}

void
write_depth_pgm(const std::filesystem::path &path, const ImageD &depth) {
    double max_depth = 0.0;
    for (double d : depth.data()) max_depth = std::max(max_depth, d);
    const double per_count = max_depth > 0 ? max_depth / 65535.0 : 1.0;
    std::vector<std::uint16_t> values(depth.pixels());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = std::uint16_t(std::lround(std::max(0.0, depth.data()[i * std::size_t(depth.channels())]) / per_count));
    }
    std::ostringstream comment;
    comment.precision(17);
    comment << "depth_per_count " << per_count;
    write_file(path, pgm16(depth.width(), depth.height(), values, comment.str()));
}

Mask
read_pgm_mask(const std::filesystem::path &path) {
    const std::string bytes = read_file(path);
    std::size_t pos         = 0;
    auto next_token         = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P5") throw Error(ErrorCode::Io, path.string() + " is not a binary PGM");
    const int width  = std::stoi(next_token());
    const int height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    ++pos; // single whitespace before the raster
    const std::size_t sample = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + std::size_t(width) * std::size_t(height) * sample) {
        throw Error(ErrorCode::Io, path.string() + " is truncated");
    }
    Mask mask(width, height);
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
        std::uint32_t v = std::uint8_t(bytes[pos + i * sample]);
        if (sample == 2) v = (v << 8) | std::uint8_t(bytes[pos + i * sample + 1]);
        mask.data()[i] = v ? 1 : 0;
    }
    return mask;
}

std::string
encode_feature_map(const ImageD &features) {
    std::string out = "AGFM";
    put_u32_le(out, std::uint32_t(features.height()));
    put_u32_le(out, std::uint32_t(features.width()));
    put_u32_le(out, std::uint32_t(features.channels()));
    out.reserve(out.size() + features.data().size() * 4);
    for (double v : features.data()) put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

ImageD
decode_feature_map(const std::string &bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 4, "AGFM") != 0) {
        throw Error(ErrorCode::Io, "not an AGFM feature map");
    }
    const auto h = get_u32_le(bytes, 4);
    const auto w = get_u32_le(bytes, 8);
    const auto c = get_u32_le(bytes, 12);
    if (bytes.size() != 16 + std::size_t(w) * h * c * 4) throw Error(ErrorCode::Io, "AGFM size mismatch");
    ImageD img{int(w), int(h), int(c)};
    for (std::size_t i = 0; i < img.data().size(); ++i) {
        img.data()[i] = std::bit_cast<float>(get_u32_le(bytes, 16 + 4 * i));
    }
    return img;
}

void
write_feature_map(const std::filesystem::path &path, const ImageD &features) {
    write_file(path, encode_feature_map(features));
}

ImageD
read_feature_map(const std::filesystem::path &path) {
    return decode_feature_map(read_file(path));
}

} // namespace agsplat
