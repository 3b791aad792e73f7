// SPDX-FileCopyrightText: Copyright (c) 2026 HANet contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace hanet {

// Library-wide logger ("hanet"), writing to stderr. Created on first use.
std::shared_ptr<spdlog::logger> logger();

}  // namespace hanet
