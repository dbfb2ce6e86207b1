#pragma once

#include <ostream>

namespace mtomd {

/// Runs the invariant suites at reduced size and prints one line per check.
/// Returns the number of failed checks.
int run_selftest(std::ostream& out);

}  // namespace mtomd
