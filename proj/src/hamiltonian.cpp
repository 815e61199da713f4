#include "resonflow/hamiltonian.hpp"

#include <cmath>

namespace resonflow {

cplx dilated_form_factor(double abs_k, double uv_sigma, cplx theta) {
    const cplx scale = std::exp(-2.0 * theta);
    return std::exp(-scale * abs_k * abs_k / (2.0 * uv_sigma * uv_sigma));
}

cplx vertex_coupling(double abs_k, double uv_sigma, cplx theta) {
    return cplx(0.0, 1.0) * std::exp(-2.0 * theta) *
           dilated_form_factor(abs_k, uv_sigma, theta) * std::sqrt(abs_k);
}

InteractionSkeleton::InteractionSkeleton(const AtomSpec& atom,
                                         const FockBasis& basis) {
    const int nf = basis.dim();
    const int na = atom.n_levels();
    dim_ = na * nf;
    const ModeGrid& grid = basis.grid();
    for (int x = 0; x < grid.n_modes(); ++x) {
        const PhotonMode& mode = grid.modes[x];
        if (mode.abs_k > basis.e_max()) continue;  // can never stay in basis
        Eigen::MatrixXcd d_eps(na, na);
        for (int a = 0; a < na; ++a)
            for (int b = 0; b < na; ++b) d_eps(a, b) = atom.dipole_element(mode.eps, a, b);
        ModeBlock block;
        block.abs_k = mode.abs_k;
        for (int i = 0; i < nf; ++i) {
            const auto [ja, amp_a] = annihilate(basis, i, x);
            const auto [jc, amp_c] = create(basis, i, x);
            for (int a = 0; a < na; ++a) {
                for (int b = 0; b < na; ++b) {
                    const cplx d = d_eps(a, b);
                    if (d == cplx(0.0, 0.0)) continue;
                    if (ja >= 0)
                        block.trip.emplace_back(product_index(a, ja, nf),
                                                product_index(b, i, nf),
                                                mode.weight * d * amp_a);
                    if (jc >= 0)
                        block.trip.emplace_back(product_index(a, jc, nf),
                                                product_index(b, i, nf),
                                                -mode.weight * d * amp_c);
                }
            }
        }
        if (!block.trip.empty()) blocks_.push_back(std::move(block));
    }
}

SparseC InteractionSkeleton::assemble(cplx theta, double uv_sigma) const {
    std::vector<Eigen::Triplet<cplx>> trip;
    std::size_t total = 0;
    for (const auto& b : blocks_) total += b.trip.size();
    trip.reserve(total);
    for (const auto& b : blocks_) {
        const cplx g = vertex_coupling(b.abs_k, uv_sigma, theta);
        for (const auto& t : b.trip)
            trip.emplace_back(t.row(), t.col(), g * t.value());
    }
    SparseC out(dim_, dim_);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseC dilated_interaction(const AtomSpec& atom, const FockBasis& basis,
                            const ProblemParams& params) {
    return InteractionSkeleton(atom, basis)
        .assemble(params.theta(), basis.grid().spec.uv_sigma);
}

Eigen::VectorXcd free_fiber_diag(const AtomSpec& atom, const FockBasis& basis,
                                 const ProblemParams& params) {
    const int nf = basis.dim();
    const int na = atom.n_levels();
    const cplx emt = params.emt();
    const cplx emt2 = params.emt2();
    Eigen::VectorXcd d(na * nf);
    for (int a = 0; a < na; ++a) {
        for (int f = 0; f < nf; ++f) {
            const double r = basis.energy(f);
            const Vec3& l = basis.momentum(f);
            d(product_index(a, f, nf)) = atom.energies(a) + emt * r -
                                         emt * cdot(params.p, l) +
                                         emt2 * 0.5 * l.squaredNorm();
        }
    }
    return d;
}

SparseC free_fiber_hamiltonian(const AtomSpec& atom, const FockBasis& basis,
                               const ProblemParams& params) {
    return diag_sparse(free_fiber_diag(atom, basis, params));
}

SparseC fiber_hamiltonian(const AtomSpec& atom, const FockBasis& basis,
                          const ProblemParams& params) {
    SparseC h = free_fiber_hamiltonian(atom, basis, params);
    if (params.lambda0 != 0.0)
        h = h + SparseC(params.lambda0 * dilated_interaction(atom, basis, params));
    return h;
}

}  // namespace resonflow
