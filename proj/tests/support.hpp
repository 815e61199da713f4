#pragma once
// Deterministic random-matrix helpers shared by unit and acceptance tests.
// Gaussian samples are produced by an explicit Box-Muller transform so the
// stream is identical across standard libraries.

#include <random>

#include "resonflow/feshbach.hpp"

namespace resonflow::testing {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        // 53-bit mantissa draw in [0,1).
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    double gaussian() {
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(6.283185307179586476925287 * u2);
    }

    cplx cgaussian() { return cplx(gaussian(), gaussian()) / std::sqrt(2.0); }

  private:
    std::mt19937_64 gen_;
};

inline DenseC random_dense(Rng& rng, int rows, int cols) {
    DenseC a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) a(i, j) = rng.cgaussian();
    return a;
}

inline DenseC random_unitary(Rng& rng, int n) {
    const Eigen::HouseholderQR<DenseC> qr(random_dense(rng, n, n));
    DenseC q = qr.householderQ();
    // Fix the column phases so the factorization is unique.
    const DenseC r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j) {
        const cplx d = r(j, j);
        if (std::abs(d) > 0) q.col(j) *= d / std::abs(d);
    }
    return q;
}

// A valid smooth decimation pair in a random unitary frame:
// T diagonalizes with well-separated invertible complex values, P is a
// smooth profile in the same frame (so [T,P] = 0 exactly up to rounding),
// and W is a small generic complex perturbation.
inline FeshbachPair random_pair(Rng& rng, int n, double coupling = 0.2) {
    Eigen::VectorXcd t_diag(n);
    for (int i = 0; i < n; ++i) {
        const double mag = 0.7 + 1.8 * rng.uniform();
        const double arg = rng.uniform(-0.4, 0.4);
        t_diag(i) = std::polar(mag, arg) + cplx(0.35 * i, 0.0);
    }
    Eigen::VectorXd p_diag(n), pbar_diag(n);
    bool has_p = false, has_pbar = false;
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform(0.0, 1.3);
        p_diag(i) = cutoff_chi(x);
        pbar_diag(i) = cutoff_chibar(x);
        has_p |= p_diag(i) > 0.1;
        has_pbar |= p_diag(i) < 0.9;
    }
    if (!has_p) { p_diag(0) = 1.0; pbar_diag(0) = 0.0; }
    if (!has_pbar) { p_diag(n - 1) = 0.0; pbar_diag(n - 1) = 1.0; }

    const DenseC u = random_unitary(rng, n);
    const DenseC t = u * t_diag.asDiagonal() * u.adjoint();
    const DenseC p = u * p_diag.cast<cplx>().asDiagonal() * u.adjoint();
    const DenseC pbar = u * pbar_diag.cast<cplx>().asDiagonal() * u.adjoint();

    DenseC w = random_dense(rng, n, n);
    w *= coupling / std::max(1e-12, operator_norm(w));
    return make_feshbach_pair(t + w, t, p, pbar);
}

}  // namespace resonflow::testing
