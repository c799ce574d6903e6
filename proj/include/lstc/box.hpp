#pragma once

#include "lstc/errors.hpp"

namespace lstc {

// Axis-aligned box in normalized image coordinates.
struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    void validate() const {
        if (!(x1 >= 0.0 && x1 < x2 && x2 <= 1.0 && y1 >= 0.0 && y1 < y2 && y2 <= 1.0)) {
            throw ConfigError("box coordinates must satisfy 0 <= x1 < x2 <= 1, 0 <= y1 < y2 <= 1");
        }
    }

    double area() const { return (x2 - x1) * (y2 - y1); }

    bool operator==(const Box&) const = default;
};

} // namespace lstc
