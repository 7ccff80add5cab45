#pragma once

#include <span>
#include <vector>

#include "ndc/errors.hpp"

namespace ndc {

/// Direct-form difference equation
///
///   a0 y[k] = sum_i b[i] x[k-i] - sum_{i>=1} a[i] y[k-i]
///
/// with zero initial conditions (x[k] = y[k] = 0 for k < 0).
inline std::vector<double> lfilter(std::span<const double> b, std::span<const double> a,
                                   std::span<const double> x) {
    detail::require(!a.empty() && a[0] != 0.0, "lfilter: a[0] must be nonzero");
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < b.size() && i <= k; ++i) acc += b[i] * x[k - i];
        for (std::size_t i = 1; i < a.size() && i <= k; ++i) acc -= a[i] * y[k - i];
        y[k] = acc / a[0];
    }
    return y;
}

/// Coefficients of the product of two polynomials in q^-1.
inline std::vector<double> poly_multiply(std::span<const double> p, std::span<const double> q) {
    if (p.empty() || q.empty()) return {};
    std::vector<double> out(p.size() + q.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < q.size(); ++j) out[i + j] += p[i] * q[j];
    return out;
}

}  // namespace ndc
