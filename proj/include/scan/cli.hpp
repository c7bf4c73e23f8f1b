#pragma once

namespace scan::cli {

// Full command-line entry point (gen-data / pretrain / embed / mine / eval /
// retrieve). Returns the process exit code: 0 success, 1 usage error, 2 data
// error.
int run(int argc, const char* const* argv);

}  // namespace scan::cli
