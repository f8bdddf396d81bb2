#pragma once

#include <memory>

#include <spdlog/logger.h>

namespace deffa {

/// Library-wide logger ("deffa"). Tests may swap its sinks to capture output.
std::shared_ptr<spdlog::logger> logger();

}  // namespace deffa
