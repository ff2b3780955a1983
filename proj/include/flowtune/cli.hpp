#pragma once

namespace flowtune {

// Entry point behind the flowtune binary; returns the process exit code.
int cli_main(int argc, const char* const* argv);

}  // namespace flowtune
