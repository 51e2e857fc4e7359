// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>

#include <iostream>
#include <mutex>

namespace agsplat {

std::string_view
to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NoGeometryAtPixel: return "NoGeometryAtPixel";
    case ErrorCode::LanguageFeaturesMissing: return "LanguageFeaturesMissing";
    case ErrorCode::WholeSceneRemoval: return "WholeSceneRemoval";
    case ErrorCode::SpecViolation: return "SpecViolation";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

namespace {
std::mutex gWarnMutex;
WarningHandler gWarnHandler;
} // namespace

void
set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(gWarnMutex);
    gWarnHandler = std::move(handler);
}

void
warn(std::string_view message) {
    std::lock_guard lock(gWarnMutex);
    if (gWarnHandler) {
        gWarnHandler(message);
    } else {
        std::cerr << "[agsplat] warning: " << message << '\n';
    }
}

} // namespace agsplat
