#pragma once
// Momentum-space discretization of the photon field: a product quadrature
// grid (Gauss-Legendre radial shells x direction grid x two helicities) with
// per-mode weights chosen so that  sum_x w_x f(k_x)  reproduces
// integral d^3k sum_lambda f(k, lambda)  for smooth f.

#include <utility>
#include <vector>

#include "resonflow/common.hpp"

namespace resonflow {

struct PhotonMode {
    Vec3 k;         // momentum
    double abs_k;   // |k|, cached
    int helicity;   // 0 or 1
    double weight;  // quadrature weight (radial wt * r^2 * direction wt)
    Vec3 eps;       // real transverse polarization vector, eps . k = 0
};

struct GridSpec {
    int n_r = 24;          // radial Gauss-Legendre shells on (0, k_max]
    int n_dir = 6;         // total direction count (factored as n_cos x n_phi)
    double k_max = 4.0;    // radial extent of the grid
    double uv_sigma = 1.0; // Gaussian ultraviolet scale of the form factor
};

struct ModeGrid {
    GridSpec spec;
    std::vector<PhotonMode> modes;
    std::vector<double> r_nodes;    // ascending radial nodes
    std::vector<double> r_weights;  // matching radial weights (without r^2)

    int n_modes() const { return static_cast<int>(modes.size()); }

    // Indices of modes with |k| <= emax, in grid order.
    std::vector<int> modes_below(double emax) const;
};

// Splits n_dir into (n_cos, n_phi) with n_cos * n_phi = n_dir and
// n_cos ~ sqrt(n_dir / 2); deterministic.
std::pair<int, int> direction_factorization(int n_dir);

// Deterministic transverse frame: Gram-Schmidt of the z axis against khat
// (x axis fallback when khat is parallel to z). helicity 0 returns the
// in-frame vector, helicity 1 the cross product khat x eps0. Depends on the
// direction only, so eps(r * khat) = eps(khat).
Vec3 polarization(const Vec3& khat, int helicity);

ModeGrid build_mode_grid(const GridSpec& spec);

}  // namespace resonflow
