// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace agsplat {

/// Row-major interleaved image.
template <typename T> class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels = 1, T fill = T{})
        : mWidth(width), mHeight(height), mChannels(channels),
          mData(std::size_t(width) * std::size_t(height) * std::size_t(channels), fill) {}

    int width() const { return mWidth; }
    int height() const { return mHeight; }
    int channels() const { return mChannels; }
    std::size_t pixels() const { return std::size_t(mWidth) * std::size_t(mHeight); }
    bool empty() const { return mData.empty(); }

    T &operator()(int x, int y, int c = 0) { return mData[index(x, y, c)]; }
    const T &operator()(int x, int y, int c = 0) const { return mData[index(x, y, c)]; }

    std::vector<T> &data() { return mData; }
    const std::vector<T> &data() const { return mData; }

    bool operator==(const Image &) const = default;

  private:
    std::size_t index(int x, int y, int c) const {
        return (std::size_t(y) * std::size_t(mWidth) + std::size_t(x)) * std::size_t(mChannels) +
               std::size_t(c);
    }

    int mWidth    = 0;
    int mHeight   = 0;
    int mChannels = 0;
    std::vector<T> mData;
};

using ImageD = Image<double>;
/// Binary mask, values in {0, 1}.
using Mask = Image<std::uint8_t>;

std::size_t count_set(const Mask &mask);

/// 8-bit PNG of a 1- or 3-channel image with values in [0, 1] (clamped).
std::string encode_png(const ImageD &image);
std::string encode_png(const Mask &mask);
void write_png(const std::filesystem::path &path, const ImageD &image);
void write_png(const std::filesystem::path &path, const Mask &mask);
/// Decodes an 8-bit gray or RGB PNG into [0, 1] doubles.
ImageD decode_png(const std::string &bytes);

/// 16-bit binary PGM; mask pixels become 0 or 65535.
void write_pgm(const std::filesystem::path &path, const Mask &mask);
/// 16-bit PGM of a depth map, scaled so the maximum depth maps to 65535. The
/// scale (depth per count) is recorded in a `# depth_per_count` comment.
void write_depth_pgm(const std::filesystem::path &path, const ImageD &depth);
/// Reads an 8- or 16-bit P5 PGM; any non-zero pixel becomes 1.
Mask read_pgm_mask(const std::filesystem::path &path);

/// Feature map file: "AGFM", u32 height, u32 width, u32 channels, then
/// little-endian float32 samples in row-major (y, x, c) order.
void write_feature_map(const std::filesystem::path &path, const ImageD &features);
ImageD read_feature_map(const std::filesystem::path &path);
std::string encode_feature_map(const ImageD &features);
ImageD decode_feature_map(const std::string &bytes);

} // namespace agsplat
