#pragma once

#include <string>
#include <vector>

#include "lstc/matrix.hpp"

namespace lstc {

// Writes one 16-bit plain PGM plus one float CSV per frame into dir:
// heatmap_<actor>_<t>.pgm / .csv. PGM values are linearly quantized to
// [0, 65535] against the maximum over all of the actor's frames.
std::vector<std::string> write_heatmap_files(const std::vector<Matrix>& frames,
                                             const std::string& dir, std::size_t actor_index);

} // namespace lstc
