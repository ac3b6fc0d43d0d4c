#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fundopt::cli {

/// Runs one CLI command. The JSON report goes to `out`, diagnostics to `err`;
/// CSV tables and a copy of the report land in the configured output
/// directory. Exit codes: 0 ok, 2 config error, 3 numeric failure,
/// 4 degenerate market, 5 model guard.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fundopt::cli
