#pragma once

#include <iosfwd>

#include "hdmix/config.hpp"

namespace hdmix {

/// Process exit codes. Failed diagnostics (verify, KKT report) use kExitSolver.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSolver = 3 };

/// Executes cfg.command, writing artifacts under cfg.out_dir and a summary to
/// `log`. Returns an exit code; diagnostics go to `err`.
int run(const RunConfig& cfg, std::ostream& log, std::ostream& err);

}  // namespace hdmix
