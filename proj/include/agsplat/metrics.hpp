// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/image.hpp>

namespace agsplat {

/// Dilation by a (2d+1)^2 square.
Mask dilate(const Mask &mask, int d);

/// |A & B| / |A | B|; 1 when both are empty.
double iou(const Mask &a, const Mask &b);

/// round(0.02 * image diagonal), at least 1 pixel.
int boundary_band_width(int width, int height);

/// Pixels of `mask` within Chebyshev distance `d` of a pixel outside the mask
/// (the image border counts as outside).
Mask boundary_band(const Mask &mask, int d);

/// IoU of the two masks after intersecting each with its own boundary band.
/// 1 when both masks are empty, 0 when exactly one is.
double boundary_iou(const Mask &a, const Mask &b, int d);
double boundary_iou(const Mask &a, const Mask &b);

} // namespace agsplat
