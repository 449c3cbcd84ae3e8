#pragma once

namespace wavegan {

/// Entry point of the `wavegan` command-line tool.  Returns the exit status.
int run_cli(int argc, char** argv);

}  // namespace wavegan
