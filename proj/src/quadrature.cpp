#include "resonflow/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include "resonflow/common.hpp"

namespace resonflow {

GaussLegendre gauss_legendre(int n) {
    RF_REQUIRE(n >= 1, "gauss_legendre: order must be >= 1, got " << n);
    GaussLegendre gl;
    gl.x.resize(n);
    gl.w.resize(n);
    const int m = (n + 1) / 2;  // roots are symmetric about 0
    for (int i = 0; i < m; ++i) {
        // Chebyshev-based initial guess for the i-th positive-side root.
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            // Legendre recurrence: p1 = P_n(x), p2 = P_{n-1}(x).
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        gl.x[i] = -x;
        gl.x[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        gl.w[i] = w;
        gl.w[n - 1 - i] = w;
    }
    if (n % 2 == 1) gl.x[n / 2] = 0.0;  // exact middle root for odd order
    return gl;
}

}  // namespace resonflow
