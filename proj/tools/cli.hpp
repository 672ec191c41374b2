// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace voxfuse::cli {

/// Runs one invocation. `args` excludes the program name. Returns the process
/// exit status; failures are reported on `err` as one JSON object.
int run(std::vector<std::string> args, std::ostream &out, std::ostream &err);

} // namespace voxfuse::cli
