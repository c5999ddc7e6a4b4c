#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pabnet/errors.hpp"

namespace pabnet {

using Vec = std::vector<double>;

// Dense row-major matrix (rows x cols).
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
};

// C x H x W activation tensor, row-major over (channel, row, col).
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    Vec v;

    Tensor3() = default;
    Tensor3(int c, int h, int w)
        : channels(c), height(h), width(w), v(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return v[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return v[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t size() const { return v.size(); }
    int spatial_size() const { return height * width; }

    bool same_shape(const Tensor3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    std::string shape_str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// y = W x + b
inline Vec affine(const Mat& w, const Vec& b, const Vec& x) {
    if (w.cols != static_cast<int>(x.size()))
        throw ShapeError("affine: expected input of size " + std::to_string(w.cols) +
                         ", got " + std::to_string(x.size()));
    Vec y(b);
    for (int r = 0; r < w.rows; ++r) {
        const double* row = &w.v[static_cast<std::size_t>(r) * w.cols];
        double acc = 0.0;
        for (int c = 0; c < w.cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
    return y;
}

// y += W^T x  (x has w.rows entries, y has w.cols entries)
inline void affine_transpose_accum(const Mat& w, const Vec& x, Vec& y) {
    for (int r = 0; r < w.rows; ++r) {
        const double* row = &w.v[static_cast<std::size_t>(r) * w.cols];
        const double xr = x[r];
        for (int c = 0; c < w.cols; ++c) y[c] += row[c] * xr;
    }
}

// W += a * b^T
inline void outer_accum(Mat& w, const Vec& a, const Vec& b) {
    for (int r = 0; r < w.rows; ++r) {
        double* row = &w.v[static_cast<std::size_t>(r) * w.cols];
        const double ar = a[r];
        for (int c = 0; c < w.cols; ++c) row[c] += ar * b[c];
    }
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace pabnet
