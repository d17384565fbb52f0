// Acceptance suite: runs the numbered verification criteria at their full
// tolerances and prints one pass/fail line per criterion. Training-based
// criteria cache their runs under --out so reruns and sibling criteria reuse
// them.
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "revlab/verify.hpp"

int main(int argc, char** argv) {
    std::string out_dir = "acceptance_work";
    std::vector<int> criteria;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--out" && i + 1 < argc) {
            out_dir = argv[++i];
        } else if (arg == "--criteria" && i + 1 < argc) {
            const std::string list = argv[++i];
            size_t pos = 0;
            while (pos < list.size()) {
                size_t comma = list.find(',', pos);
                if (comma == std::string::npos) {
                    comma = list.size();
                }
                criteria.push_back(std::stoi(list.substr(pos, comma - pos)));
                pos = comma + 1;
            }
        } else {
            std::fprintf(stderr, "usage: acceptance [--criteria 1,2,...] [--out DIR]\n");
            return 2;
        }
    }
    const auto results =
        revlab::run_verification(revlab::VerifyProfile::full, criteria, out_dir);
    return revlab::all_passed(results) ? 0 : 1;
}
