#pragma once

#include <cstdint>
#include <string>

namespace sadl_cli {

struct VerifyOptions {
  std::string suite = "all";  // moments | lowrank | gradient | all
  std::uint64_t seed = 42;
  std::uint64_t samples = 200000;
  bool corrupt_tolerances = false;  // debug: force every check to fail
};

// Runs the requested oracle cross-check suites on randomized small
// instances, printing one PASS/FAIL record per check. Returns the process
// exit code (0 all pass, 1 otherwise).
int run_verify(const VerifyOptions& options);

}  // namespace sadl_cli
