#pragma once

#include <string>
#include <vector>

#include "dbmnet/common.hpp"

namespace dbmnet {

/// Flat indexing over the chain states of every class: state ids run
/// class-major, so class c's local state s has id offset[c] + s.
struct StateSpace {
    std::vector<std::string> classes;
    std::vector<int> states_per_class;
    std::vector<int> offsets;

    static StateSpace make(std::vector<std::string> classes, std::vector<int> states_per_class) {
        StateSpace sp;
        sp.classes = std::move(classes);
        sp.states_per_class = std::move(states_per_class);
        if (sp.classes.size() != sp.states_per_class.size()) {
            throw DataError("state space: classes and state counts disagree");
        }
        int off = 0;
        for (int n : sp.states_per_class) {
            if (n < 1) throw DataError("state space: each class needs >= 1 state");
            sp.offsets.push_back(off);
            off += n;
        }
        sp.offsets.push_back(off);
        return sp;
    }

    int total() const { return offsets.empty() ? 0 : offsets.back(); }
    int flat(int class_idx, int local_state) const { return offsets[class_idx] + local_state; }
    int class_of(int flat_state) const {
        for (std::size_t c = 0; c + 1 < offsets.size(); ++c)
            if (flat_state < offsets[c + 1]) return static_cast<int>(c);
        throw DataError("state space: flat state out of range");
    }
    int local_of(int flat_state) const { return flat_state - offsets[class_of(flat_state)]; }
    std::string name(int flat_state) const {
        return classes[class_of(flat_state)] + "/s" + std::to_string(local_of(flat_state));
    }
};

} // namespace dbmnet
