#pragma once

#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sems/common.hpp"

namespace sems {

/// A set of exactly n_pilots distinct (slot, subcarrier) cells, kept both as
/// an ordered list (head order) and as a flat binary mask.
class PilotPattern {
public:
    PilotPattern() = default;
    PilotPattern(int n_slots, int n_subcarriers, std::vector<std::pair<int, int>> cells)
        : n_(n_slots), m_(n_subcarriers), cells_(std::move(cells)), mask_(static_cast<size_t>(n_) * m_, 0) {
        std::set<std::pair<int, int>> seen;
        for (auto [slot, sub] : cells_) {
            require(slot >= 0 && slot < n_ && sub >= 0 && sub < m_, "pilot cell out of grid");
            require(seen.insert({slot, sub}).second, "duplicate pilot cell");
            mask_[static_cast<size_t>(slot) * m_ + sub] = 1;
        }
    }

    int n_slots() const { return n_; }
    int n_subcarriers() const { return m_; }
    int n_pilots() const { return static_cast<int>(cells_.size()); }
    const std::vector<std::pair<int, int>>& cells() const { return cells_; }
    const std::vector<uint8_t>& mask() const { return mask_; }
    bool is_pilot(int slot, int sub) const { return mask_[static_cast<size_t>(slot) * m_ + sub] != 0; }
    bool empty() const { return cells_.empty(); }

    /// Sorted list of distinct subcarriers that carry at least one pilot.
    std::vector<int> pilot_subcarriers() const {
        std::set<int> subs;
        for (auto [slot, sub] : cells_) subs.insert(sub);
        return {subs.begin(), subs.end()};
    }

    /// Sorted list of distinct slots that carry at least one pilot.
    std::vector<int> pilot_slots() const {
        std::set<int> slots;
        for (auto [slot, sub] : cells_) slots.insert(slot);
        return {slots.begin(), slots.end()};
    }

    /// Slots at which `sub` carries a pilot, ascending.
    std::vector<int> slots_of_subcarrier(int sub) const {
        std::vector<int> slots;
        for (int n = 0; n < n_; ++n)
            if (is_pilot(n, sub)) slots.push_back(n);
        return slots;
    }

private:
    int n_ = 0;
    int m_ = 0;
    std::vector<std::pair<int, int>> cells_;
    std::vector<uint8_t> mask_;
};

inline void write_pattern_csv(const PilotPattern& pattern, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "cannot open pattern csv " + path);
    out << "head,slot,subcarrier\n";
    for (size_t r = 0; r < pattern.cells().size(); ++r)
        out << r << "," << pattern.cells()[r].first << "," << pattern.cells()[r].second << "\n";
}

inline PilotPattern read_pattern_csv(const std::string& path, int n_slots, int n_subcarriers) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("pattern csv not found: " + path);
    std::string line;
    std::getline(in, line);
    require(line == "head,slot,subcarrier", "pattern csv: bad header in " + path);
    std::vector<std::pair<int, int>> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int head = 0, slot = 0, sub = 0;
        if (std::sscanf(line.c_str(), "%d,%d,%d", &head, &slot, &sub) != 3)
            throw ValidationError("pattern csv: bad row '" + line + "'");
        cells.emplace_back(slot, sub);
    }
    return PilotPattern(n_slots, n_subcarriers, std::move(cells));
}

}  // namespace sems
