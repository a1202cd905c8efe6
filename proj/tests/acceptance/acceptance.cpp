// Acceptance suite: one pass/fail line per criterion. Run with no arguments
// for all criteria or with a list of criterion numbers.

#include "vmpt/vmpt.hpp"

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Criterion {
    int number;
    std::string title;
    bool (*run)(std::string& detail);
};

bool placeholder(std::string& detail) {
    detail = "not implemented yet";
    return false;
}

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> list = {
        {1, "gradient correctness", placeholder},
    };
    return list;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    bool all_ok = true;
    for (const Criterion& c : criteria()) {
        bool selected = wanted.empty();
        for (int w : wanted) selected |= w == c.number;
        if (!selected) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", c.number,
                    c.title.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
        all_ok &= ok;
    }
    return all_ok ? 0 : 1;
}
