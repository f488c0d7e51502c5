// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef PROTODIFF_ERROR_HPP_
#define PROTODIFF_ERROR_HPP_

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace protodiff {

/// Malformed input data: bad RLE, inconsistent dimensions, unreadable files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A violated precondition while running a pipeline stage.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(std::string_view)>;

// Default handler prints "warning: <msg>" to stderr. Passing an empty
// function silences warnings. Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace protodiff

#endif  // PROTODIFF_ERROR_HPP_
