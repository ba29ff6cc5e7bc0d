#pragma once

#include <string>

// Thin logging facade. The backend lives in its own target so that its fmt
// dependency never meets the fmt copy bundled with LibTorch.
namespace vidswap::log {

enum class Level { kTrace, kDebug, kInfo, kWarn, kError };

void set_level(Level level);
void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);

}  // namespace vidswap::log
