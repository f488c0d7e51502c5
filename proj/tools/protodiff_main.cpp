// Copyright 2026 The protodiff Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "protodiff/cli.hpp"

int main(int argc, char** argv) {
  return protodiff::run_cli(argc, argv, std::cout, std::cerr);
}
