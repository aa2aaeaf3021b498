// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace tdsep {

// Command-line entry point shared by the binary and in-process tests.
// `args` excludes the program name. Returns the process exit code:
// 0 success, 2 configuration error, 3 data error, 4 numerical failure.
int run_cli(std::vector<std::string> args);

}  // namespace tdsep
