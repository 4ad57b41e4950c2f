#pragma once

#include <iosfwd>

namespace muse::cli {

enum exit_code : int { ok = 0, usage = 1, data_error = 2, numeric_error = 3 };

/// Parses and runs one command. Errors are reported on `err` and mapped to
/// the exit codes above; nothing escapes as an exception.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace muse::cli
