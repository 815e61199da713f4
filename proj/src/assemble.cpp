#include "resonflow/assemble.hpp"

#include <vector>

namespace resonflow {

SparseC assemble_monomial(const FockBasis& basis, const WickKernel& k,
                          double rho, const Vec3& axis) {
    RF_REQUIRE(std::abs(k.grid.rho - rho) <= 1e-12 * std::max(1.0, rho),
               "assemble_monomial: kernel scale " << k.grid.rho
                                                  << " does not match rho "
                                                  << rho);
    SparseC out(basis.dim(), basis.dim());
    if (k.m > basis.n_max() || k.n > basis.n_max()) {
        RF_WARN("assemble_monomial: slot count (" << k.m << "," << k.n
                                                  << ") exceeds basis cap "
                                                  << basis.n_max()
                                                  << "; returning zero");
        return out;
    }

    const ModeGrid& grid = basis.grid();
    const std::vector<int> block =
        basis.block_below(rho * (1.0 + 1e-12) + 1e-300);
    std::vector<Eigen::Triplet<cplx>> trips;

    if (k.m + k.n == 0) {
        for (const int s : block) {
            const LParPerp lp = split_l(basis.momentum(s), axis);
            const cplx val =
                eval_kernel(k, basis.energy(s), lp.par, lp.perp, {});
            if (val != cplx(0, 0)) trips.emplace_back(s, s, val);
        }
        out.setFromTriplets(trips.begin(), trips.end());
        return out;
    }

    const int slots = k.m + k.n;
    std::vector<int> slot_modes(static_cast<std::size_t>(slots));
    const long tuples = k.k_tuples();
    for (long t = 0; t < tuples; ++t) {
        long rem = t;
        double w_quad = 1.0;
        for (int d = slots - 1; d >= 0; --d) {
            const int mode =
                k.modes[static_cast<std::size_t>(rem % k.k_dim())];
            rem /= k.k_dim();
            slot_modes[static_cast<std::size_t>(d)] = mode;
            w_quad *= grid.modes[static_cast<std::size_t>(mode)].weight;
        }
        for (const int col : block) {
            int cur = col;
            double amp = 1.0;
            for (int d = k.m; d < slots && cur >= 0; ++d) {
                const auto [tgt, a] = annihilate(
                    basis, cur, slot_modes[static_cast<std::size_t>(d)]);
                cur = tgt;
                amp *= a;
            }
            if (cur < 0) continue;

            const LParPerp lp = split_l(basis.momentum(cur), axis);
            const cplx val =
                eval_kernel(k, basis.energy(cur), lp.par, lp.perp, slot_modes);
            if (val == cplx(0, 0)) continue;

            for (int d = 0; d < k.m && cur >= 0; ++d) {
                const auto [tgt, a] =
                    create(basis, cur, slot_modes[static_cast<std::size_t>(d)]);
                cur = tgt;
                amp *= a;
            }
            if (cur < 0) continue;
            if (basis.energy(cur) > rho * (1.0 + 1e-12)) continue;
            trips.emplace_back(cur, col, w_quad * amp * val);
        }
    }
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

SparseC evaluate_family(const FockBasis& basis, const KernelFamily& fam,
                        const Vec3& axis) {
    SparseC out(basis.dim(), basis.dim());
    for (const auto& [key, k] : fam.kernels)
        out += assemble_monomial(basis, k, fam.rho, axis);

    // Vacuum energy and the analytic free polynomial act diagonally on the
    // retained block; the sampled (0,0) correction was already assembled
    // above.
    Eigen::VectorXcd diag(basis.dim());
    diag.setZero();
    bool any = false;
    for (const int s : basis.block_below(fam.rho * (1.0 + 1e-12) + 1e-300)) {
        const LParPerp lp = split_l(basis.momentum(s), axis);
        const cplx val = fam.E + fam.free(basis.energy(s), lp.par, lp.perp);
        if (val != cplx(0, 0)) {
            diag(s) = val;
            any = true;
        }
    }
    if (any) out += diag_sparse(diag);
    return out;
}

}  // namespace resonflow
