#include "mcpq/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace mcpq {

LogLevel log_level() {
  const char* env = std::getenv("MCPQ_LOG");
  const std::string v = env ? env : "";
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Warn;
}

void log_message(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[mcpq " << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace mcpq
