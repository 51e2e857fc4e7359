// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace agsplat {

enum class ErrorCode {
    InvalidInput,
    NoGeometryAtPixel,
    LanguageFeaturesMissing,
    WholeSceneRemoval,
    SpecViolation,
    NumericalFailure,
    Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string &what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), mCode(code) {}

    ErrorCode code() const noexcept { return mCode; }

  private:
    ErrorCode mCode;
};

/// Non-fatal conditions (degenerate bounds, non-unit quaternions) are reported
/// here. The default handler prints to stderr.
using WarningHandler = std::function<void(std::string_view)>;

void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

} // namespace agsplat
