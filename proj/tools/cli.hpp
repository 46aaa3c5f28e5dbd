// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  In-process entry point of the `vqa` command-line tool.
 */
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vqa::cli {

/// Exit codes.
enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Runs `vqa <args...>`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vqa::cli
