#pragma once
// Shared scalar aliases, the error-check macro, and the smooth cutoff profile
// used throughout the library.

#include <complex>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace resonflow {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;

// Runtime contract check. Messages may use stream syntax:
//   RF_REQUIRE(x > 0, "x must be positive, got " << x);
#define RF_REQUIRE(cond, msg)                                                 \
    do {                                                                      \
        if (!(cond)) {                                                        \
            std::ostringstream rf_oss_;                                       \
            rf_oss_ << "resonflow: " << msg << " [" << __FILE__ << ":"        \
                    << __LINE__ << "]";                                       \
            throw std::runtime_error(rf_oss_.str());                          \
        }                                                                     \
    } while (0)

// Non-fatal diagnostic to stderr, same stream syntax as RF_REQUIRE.
#define RF_WARN(msg)                                                          \
    do {                                                                      \
        std::cerr << "resonflow: warning: " << msg << std::endl;              \
    } while (0)

// Bilinear (unconjugated) dot products. Complex momenta enter all formulas by
// analytic continuation, so p.dot(l) (which conjugates) must never be used.
inline cplx cdot(const Vec3c& a, const Vec3c& b) {
    return a(0) * b(0) + a(1) * b(1) + a(2) * b(2);
}
inline cplx cdot(const Vec3c& a, const Vec3& b) {
    return a(0) * b(0) + a(1) * b(1) + a(2) * b(2);
}
inline double cdot(const Vec3& a, const Vec3& b) { return a.dot(b); }

// Smooth cutoff profile on the unit scale:
//   chi(x) = 1 for x <= 3/4, cos^2(2*pi*(x - 3/4)) on (3/4, 1], 0 beyond.
// C^1, strictly decreasing on (3/4, 1), and chi^2 + chibar^2 = 1 with
// chibar = sqrt(1 - chi^2).
inline double cutoff_chi(double x) {
    if (x <= 0.75) return 1.0;
    if (x >= 1.0) return 0.0;
    const double c = std::cos(2.0 * M_PI * (x - 0.75));
    return c * c;
}

inline double cutoff_chibar(double x) {
    const double c = cutoff_chi(x);
    return std::sqrt(std::max(0.0, 1.0 - c * c));
}

// Scaled variants: chi_rho(x) = chi(x / rho).
inline double chi_rho(double x, double rho) { return cutoff_chi(x / rho); }
inline double chibar_rho(double x, double rho) { return cutoff_chibar(x / rho); }
inline double chibar_sq_rho(double x, double rho) {
    const double c = cutoff_chi(x / rho);
    return std::max(0.0, 1.0 - c * c);
}

}  // namespace resonflow
