#pragma once

#include <iosfwd>

namespace hierest::cli
{

enum ExitCode
{
    Ok = 0,
    Validation = 2,
    Diverged = 3,
    Unwritable = 4,
};

/// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace hierest::cli
