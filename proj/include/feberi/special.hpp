#pragma once

#include <cmath>
#include <utility>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/minima.hpp>

namespace feberi {

// Integer-order Bessel J valid for negative orders and arguments.
inline double bessel_j(int m, double x) {
    double sign = 1.0;
    if (m < 0) {
        m = -m;
        if (m % 2) sign = -sign;
    }
    if (x < 0.0) {
        x = -x;
        if (m % 2) sign = -sign;
    }
    if (x == 0.0) return m == 0 ? sign : 0.0;
    return sign * boost::math::cyl_bessel_j(m, x);
}

// Location and value of the first maximum of J_m on x ≥ 0.
inline std::pair<double, double> bessel_first_max(int m) {
    if (m < 0) m = -m;
    if (m == 0) return {0.0, 1.0};
    const double hi = boost::math::cyl_bessel_j_zero(static_cast<double>(m), 1);
    auto r = boost::math::tools::brent_find_minima(
        [m](double x) { return -boost::math::cyl_bessel_j(m, x); }, 0.0, hi, 52);
    // Polish the bracketed estimate with Newton steps on J'_m = (J_{m−1} − J_{m+1})/2.
    double x = r.first;
    for (int it = 0; it < 4; ++it) {
        const double f = bessel_j(m - 1, x) - bessel_j(m + 1, x);
        const double df = 0.5 * (bessel_j(m - 2, x) - 2.0 * bessel_j(m, x) + bessel_j(m + 2, x));
        if (df == 0.0) break;
        x -= f / df;
    }
    return {x, bessel_j(m, x)};
}

}  // namespace feberi
