#pragma once

#include <cstdint>
#include <vector>

#include "lstc/matrix.hpp"

namespace lstc {

// Long-term context for one query clip: rows gathered from the feature
// bank, with the source timestamp of every row. May be empty.
struct FeatureWindow {
    Matrix ctx; // L x d
    std::vector<std::int64_t> source_timestamps;

    std::size_t length() const { return ctx.rows(); }
    bool empty() const { return ctx.rows() == 0; }
};

} // namespace lstc
