#include "deffa/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace deffa {

std::shared_ptr<spdlog::logger> logger()
{
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto existing = spdlog::get("deffa");
        if (existing) return existing;
        auto created = spdlog::stderr_color_mt("deffa");
        created->set_pattern("[%l] %v");
        return created;
    }();
    return instance;
}

}  // namespace deffa
