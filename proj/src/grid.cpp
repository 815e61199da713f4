#include "resonflow/grid.hpp"

#include <cmath>

#include "resonflow/quadrature.hpp"

namespace resonflow {

std::vector<int> ModeGrid::modes_below(double emax) const {
    std::vector<int> out;
    for (int i = 0; i < n_modes(); ++i)
        if (modes[i].abs_k <= emax) out.push_back(i);
    return out;
}

std::pair<int, int> direction_factorization(int n_dir) {
    RF_REQUIRE(n_dir >= 1, "direction_factorization: n_dir must be >= 1");
    const int target = std::max(1, (int)std::llround(std::sqrt(n_dir / 2.0)));
    // Search outward from the target for a divisor of n_dir.
    for (int d = 0; d <= n_dir; ++d) {
        if (target - d >= 1 && n_dir % (target - d) == 0)
            return {target - d, n_dir / (target - d)};
        if (target + d <= n_dir && n_dir % (target + d) == 0)
            return {target + d, n_dir / (target + d)};
    }
    return {1, n_dir};  // unreachable; 1 always divides
}

Vec3 polarization(const Vec3& khat, int helicity) {
    RF_REQUIRE(helicity == 0 || helicity == 1,
               "polarization: helicity must be 0 or 1, got " << helicity);
    Vec3 ref(0.0, 0.0, 1.0);
    Vec3 e0 = ref - ref.dot(khat) * khat;
    if (e0.norm() < 1e-12) {
        ref = Vec3(1.0, 0.0, 0.0);
        e0 = ref - ref.dot(khat) * khat;
    }
    e0.normalize();
    if (helicity == 0) return e0;
    return khat.cross(e0);
}

ModeGrid build_mode_grid(const GridSpec& spec) {
    RF_REQUIRE(spec.n_r >= 1, "build_mode_grid: n_r must be >= 1");
    RF_REQUIRE(spec.k_max > 0.0, "build_mode_grid: k_max must be positive");
    RF_REQUIRE(spec.uv_sigma > 0.0, "build_mode_grid: uv_sigma must be positive");

    ModeGrid grid;
    grid.spec = spec;

    // Radial shells: Gauss-Legendre on [-1,1] mapped to (0, k_max].
    const GaussLegendre glr = gauss_legendre(spec.n_r);
    grid.r_nodes.resize(spec.n_r);
    grid.r_weights.resize(spec.n_r);
    for (int i = 0; i < spec.n_r; ++i) {
        grid.r_nodes[i] = 0.5 * spec.k_max * (glr.x[i] + 1.0);
        grid.r_weights[i] = 0.5 * spec.k_max * glr.w[i];
    }

    // Directions: Gauss-Legendre in cos(theta) x uniform phi.
    const auto [n_cos, n_phi] = direction_factorization(spec.n_dir);
    const GaussLegendre glu = gauss_legendre(n_cos);
    struct Dir {
        Vec3 khat;
        double weight;
    };
    std::vector<Dir> dirs;
    dirs.reserve(spec.n_dir);
    for (int iu = 0; iu < n_cos; ++iu) {
        const double u = glu.x[iu];
        const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
        for (int ip = 0; ip < n_phi; ++ip) {
            const double phi = 2.0 * M_PI * ip / n_phi;
            Dir d;
            d.khat = Vec3(s * std::cos(phi), s * std::sin(phi), u);
            d.weight = glu.w[iu] * 2.0 * M_PI / n_phi;
            dirs.push_back(d);
        }
    }

    // Mode order: radial shell (ascending), then direction, then helicity.
    grid.modes.reserve(static_cast<std::size_t>(spec.n_r) * spec.n_dir * 2);
    for (int ir = 0; ir < spec.n_r; ++ir) {
        const double r = grid.r_nodes[ir];
        const double wr = grid.r_weights[ir] * r * r;
        for (const Dir& d : dirs) {
            for (int hel = 0; hel < 2; ++hel) {
                PhotonMode m;
                m.k = r * d.khat;
                m.abs_k = r;
                m.helicity = hel;
                m.weight = wr * d.weight;
                m.eps = polarization(d.khat, hel);
                grid.modes.push_back(m);
            }
        }
    }
    return grid;
}

}  // namespace resonflow
