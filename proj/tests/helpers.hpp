#pragma once

// Shared test utilities: finite-difference gradient oracle and small
// builders used across the suites.

#include <cmath>
#include <functional>
#include <vector>

#include "savage/common.hpp"

namespace savage::testing {

// Central finite differences of a scalar function of one matrix argument.
// f must be a pure function of x (it is evaluated 2*size times).
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f,
                                const Matrix& x, double step = 1e-5) {
    Matrix g(x.rows, x.cols);
    Matrix probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + step;
        const double hi = f(probe);
        probe.data[i] = saved - step;
        const double lo = f(probe);
        probe.data[i] = saved;
        g.data[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

// |a-b| <= max(rel * max(|a|,|b|), abs_floor), elementwise.
inline bool gradients_close(const Matrix& a, const Matrix& b, double rel,
                            double abs_floor = 1e-6, size_t* bad_index = nullptr) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const double diff = std::abs(a.data[i] - b.data[i]);
        const double scale = std::max(std::abs(a.data[i]), std::abs(b.data[i]));
        if (diff > std::max(rel * scale, abs_floor)) {
            if (bad_index) *bad_index = i;
            return false;
        }
    }
    return true;
}

inline Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -2.0,
                            double hi = 2.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

}  // namespace savage::testing
