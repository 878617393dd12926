#pragma once

#include <cstddef>
#include <vector>

namespace psi::flowexpert {

/// Dense row-major matrix of doubles. All model math runs in double; the
/// float32 conversion happens only at the checkpoint boundary.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Mat&) const = default;
};

}  // namespace psi::flowexpert
