#pragma once

#include <string>
#include <vector>

namespace hstrnet {

struct SelfCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Built-in numeric consistency checks: exact warp/blend identities, loop
// oracles for attention and deformable sampling, resolution handling, and
// finite-difference gradient probes. With f64 the gradient probes run the
// double-precision model against a 1e-4 tolerance.
std::vector<SelfCheck> run_selftest(bool f64);

bool all_passed(const std::vector<SelfCheck>& checks);

}  // namespace hstrnet
