#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsfqf {

using Vec = std::vector<double>;

// Dense row-major matrix. Small enough nets that a flat buffer is all we need.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    double* row(std::size_t r) { return a.data() + r * cols; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }

    std::size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
    void fill(double v) { std::fill(a.begin(), a.end(), v); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// y[j] += sum_i w(i,j) * x[i]   (w: [n_in x n_out])
inline void add_matvec_t(const Mat& w, const double* x, double* y) {
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wr = w.row(i);
        for (std::size_t j = 0; j < w.cols; ++j) y[j] += wr[j] * xi;
    }
}

// y[i] += sum_j w(i,j) * g[j]   (back-transport through the same layout)
inline void add_matvec(const Mat& w, const double* g, double* y) {
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* wr = w.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) acc += wr[j] * g[j];
        y[i] += acc;
    }
}

// dw(i,j) += x[i] * g[j]
inline void add_outer(Mat& dw, const double* x, const double* g) {
    for (std::size_t i = 0; i < dw.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* wr = dw.row(i);
        for (std::size_t j = 0; j < dw.cols; ++j) wr[j] += xi * g[j];
    }
}

inline bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace mcsfqf
