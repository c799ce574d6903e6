#include "lstc/heatmap_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lstc/errors.hpp"

namespace lstc {

std::vector<std::string> write_heatmap_files(const std::vector<Matrix>& frames,
                                             const std::string& dir, std::size_t actor_index) {
    if (frames.empty()) throw ConfigError("heatmap export: no frames");
    double vmax = 0.0;
    for (const Matrix& f : frames) {
        for (double v : f.data()) vmax = std::max(vmax, v);
    }
    if (vmax <= 0.0) vmax = 1.0;

    std::vector<std::string> written;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const Matrix& f = frames[t];
        const std::string stem =
            dir + "/heatmap_" + std::to_string(actor_index) + "_" + std::to_string(t);

        std::ofstream pgm(stem + ".pgm");
        if (!pgm) throw ConfigError("heatmap export: cannot write " + stem + ".pgm");
        pgm << "P2\n" << f.cols() << " " << f.rows() << "\n65535\n";
        for (std::size_t i = 0; i < f.rows(); ++i) {
            for (std::size_t j = 0; j < f.cols(); ++j) {
                const long q = std::lround(f(i, j) / vmax * 65535.0);
                pgm << q << (j + 1 == f.cols() ? "" : " ");
            }
            pgm << "\n";
        }
        written.push_back(stem + ".pgm");

        std::ofstream csv(stem + ".csv");
        if (!csv) throw ConfigError("heatmap export: cannot write " + stem + ".csv");
        char buf[64];
        for (std::size_t i = 0; i < f.rows(); ++i) {
            for (std::size_t j = 0; j < f.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", f(i, j));
                csv << buf << (j + 1 == f.cols() ? "" : ",");
            }
            csv << "\n";
        }
        written.push_back(stem + ".csv");
    }
    return written;
}

} // namespace lstc
