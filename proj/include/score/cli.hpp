#pragma once

namespace score::cli {

// Full command-line entry point. Returns the process exit code:
// 0 on success, 2 on usage errors, 1 on runtime failures.
int run(int argc, char** argv);

}  // namespace score::cli
