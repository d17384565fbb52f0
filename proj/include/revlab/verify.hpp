#pragma once

#include <functional>
#include <string>
#include <vector>

namespace revlab {

enum class VerifyProfile { fast, full };

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    bool skipped = false;
    std::string detail;
};

// Runs the numbered verification criteria (1..10) at the requested profile.
// `fast` trims sample counts and skips the long training criteria; `full`
// runs everything at the stated tolerances. Training criteria reuse cached
// runs under work_dir when present. Prints one pass/fail line per criterion
// to stdout.
std::vector<CriterionResult> run_verification(VerifyProfile profile,
                                              const std::vector<int>& criteria,
                                              const std::string& work_dir);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace revlab
