// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#include "hanet/log.hpp"

#include <mutex>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace hanet {

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> log;
  std::call_once(once, [] {
    log = spdlog::get("hanet");
    if (!log) log = spdlog::stderr_color_mt("hanet");
  });
  return log;
}

}  // namespace hanet
