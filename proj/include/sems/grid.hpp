#pragma once

#include <vector>

#include "sems/common.hpp"

namespace sems {

/// Complex N-slot x M-subcarrier matrix, row-major in (slot, subcarrier).
class TFGrid {
public:
    TFGrid() = default;
    TFGrid(int n_slots, int n_subcarriers)
        : n_(n_slots), m_(n_subcarriers), data_(static_cast<size_t>(n_slots) * n_subcarriers) {}

    int n_slots() const { return n_; }
    int n_subcarriers() const { return m_; }
    size_t size() const { return data_.size(); }

    cplx& at(int n, int m) { return data_[static_cast<size_t>(n) * m_ + m]; }
    const cplx& at(int n, int m) const { return data_[static_cast<size_t>(n) * m_ + m]; }

    cplx* data() { return data_.data(); }
    const cplx* data() const { return data_.data(); }

    bool same_shape(const TFGrid& o) const { return n_ == o.n_ && m_ == o.m_; }

    bool operator==(const TFGrid& o) const {
        return n_ == o.n_ && m_ == o.m_ && data_ == o.data_;
    }

private:
    int n_ = 0;
    int m_ = 0;
    std::vector<cplx> data_;
};

}  // namespace sems
