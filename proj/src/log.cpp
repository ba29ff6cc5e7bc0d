#include "vidswap/log.hpp"

#include <spdlog/spdlog.h>

namespace vidswap::log {

void set_level(Level level) {
  switch (level) {
    case Level::kTrace: spdlog::set_level(spdlog::level::trace); break;
    case Level::kDebug: spdlog::set_level(spdlog::level::debug); break;
    case Level::kInfo: spdlog::set_level(spdlog::level::info); break;
    case Level::kWarn: spdlog::set_level(spdlog::level::warn); break;
    case Level::kError: spdlog::set_level(spdlog::level::err); break;
  }
}

void debug(const std::string& msg) { spdlog::debug(msg); }
void info(const std::string& msg) { spdlog::info(msg); }
void warn(const std::string& msg) { spdlog::warn(msg); }
void error(const std::string& msg) { spdlog::error(msg); }

}  // namespace vidswap::log
