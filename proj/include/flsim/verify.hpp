#pragma once

#include <string>
#include <vector>

namespace flsim {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast self-contained property suite (no dataset needed): gradient check,
// the one-batch weight/gradient aggregation identity, strategy contracts,
// entropy bounds, acquisition vs brute force, divergence oracle, checkpoint
// round-trip, dropout and determinism basics.
std::vector<CheckResult> run_verification();

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace flsim
