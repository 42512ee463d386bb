#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cassikit {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;            // one-line measurement summary
    std::vector<int> criteria;     // acceptance criteria this check covers
};

/// Desk-scale verification sweep: adjoint tests, dense oracles, round trips,
/// scan equivalence, gradient checks, and every module-level invariant.
/// The traceability map from checks to acceptance criteria is carried in the
/// results (see docs/selfcheck.md).
std::vector<CheckResult> run_selfcheck(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

} // namespace cassikit
