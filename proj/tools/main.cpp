// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <iostream>

int main(int argc, char **argv) {
    return voxfuse::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
