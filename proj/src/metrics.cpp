// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/metrics.hpp>

#include <algorithm>
#include <cmath>

namespace agsplat {

namespace {

void
require_same_size(const Mask &a, const Mask &b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw Error(ErrorCode::InvalidInput, "masks must share dimensions");
    }
}

/// Erosion by a (2d+1)^2 square with zero padding, as two 1D min passes.
Mask
erode(const Mask &mask, int d) {
    const int w = mask.width(), h = mask.height();
    Mask rows(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = (x - d < 0 || x + d >= w) ? 0 : 1;
            for (int xx = std::max(0, x - d); v && xx <= std::min(w - 1, x + d); ++xx) v = mask(xx, y) ? 1 : 0;
            rows(x, y) = v;
        }
    }
    Mask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = (y - d < 0 || y + d >= h) ? 0 : 1;
            for (int yy = std::max(0, y - d); v && yy <= std::min(h - 1, y + d); ++yy) v = rows(x, yy);
            out(x, y) = v;
        }
    }
    return out;
}

} // namespace

Mask
dilate(const Mask &mask, int d) {
    const int w = mask.width(), h = mask.height();
    Mask rows(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int xx = std::max(0, x - d); !v && xx <= std::min(w - 1, x + d); ++xx) v = mask(xx, y) ? 1 : 0;
            rows(x, y) = v;
        }
    }
    Mask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int yy = std::max(0, y - d); !v && yy <= std::min(h - 1, y + d); ++yy) v = rows(x, yy);
            out(x, y) = v;
        }
    }
    return out;
}

double
iou(const Mask &a, const Mask &b) {
    require_same_size(a, b);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < a.pixels(); ++p) {
        const bool x = a.data()[p] != 0, y = b.data()[p] != 0;
        inter += (x && y);
        uni += (x || y);
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

int
boundary_band_width(int width, int height) {
    const double diag = std::sqrt(double(width) * width + double(height) * height);
    return std::max(1, int(std::lround(0.02 * diag)));
}

Mask
boundary_band(const Mask &mask, int d) {
    const Mask inner = erode(mask, d);
    Mask band(mask.width(), mask.height());
    for (std::size_t p = 0; p < mask.pixels(); ++p) {
        band.data()[p] = (mask.data()[p] && !inner.data()[p]) ? 1 : 0;
    }
    return band;
}

double
boundary_iou(const Mask &a, const Mask &b, int d) {
    require_same_size(a, b);
    const bool a_empty = count_set(a) == 0, b_empty = count_set(b) == 0;
    if (a_empty && b_empty) return 1.0;
    if (a_empty || b_empty) return 0.0;
    return iou(boundary_band(a, d), boundary_band(b, d));
}

double
boundary_iou(const Mask &a, const Mask &b) {
    return boundary_iou(a, b, boundary_band_width(a.width(), a.height()));
}

} // namespace agsplat
