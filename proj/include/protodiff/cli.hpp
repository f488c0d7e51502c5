// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_CLI_HPP_
#define PROTODIFF_CLI_HPP_

#include <iosfwd>

namespace protodiff {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitPipeline = 4;

// Entry point of the `protodiff` tool: gen | run | sweep | compare.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace protodiff

#endif  // PROTODIFF_CLI_HPP_
