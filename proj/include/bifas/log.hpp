// Copyright 2026 The bifas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>

namespace bifas {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Verbosity is controlled by the BIFAS_LOG environment variable only
// (debug|info|warn|error|off). Default: warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("BIFAS_LOG");
    if (!env) return LogLevel::warn;
    const std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "warn") return LogLevel::warn;
    if (v == "error") return LogLevel::error;
    if (v == "off") return LogLevel::off;
    return LogLevel::warn;
  }();
  return level;
}

template <typename... Args>
inline void log_at(LogLevel level, const char* tag, Args&&... args) {
  if (level < log_level()) return;
  std::ostringstream oss;
  (oss << ... << args);
  std::cerr << "[" << tag << "] " << oss.str() << "\n";
}

template <typename... Args>
inline void log_debug(Args&&... args) { log_at(LogLevel::debug, "debug", std::forward<Args>(args)...); }
template <typename... Args>
inline void log_info(Args&&... args) { log_at(LogLevel::info, "info", std::forward<Args>(args)...); }
template <typename... Args>
inline void log_warn(Args&&... args) { log_at(LogLevel::warn, "warn", std::forward<Args>(args)...); }
template <typename... Args>
inline void log_error(Args&&... args) { log_at(LogLevel::error, "error", std::forward<Args>(args)...); }

}  // namespace bifas
