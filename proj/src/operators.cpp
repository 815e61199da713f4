#include "resonflow/operators.hpp"

#include <vector>

namespace resonflow {

SparseC ladder_annihilation(const FockBasis& basis, int mode) {
    const int n = basis.dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int i = 0; i < n; ++i) {
        const auto [j, amp] = annihilate(basis, i, mode);
        if (j >= 0) trip.emplace_back(j, i, cplx(amp, 0.0));
    }
    SparseC out(n, n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseC ladder_creation(const FockBasis& basis, int mode) {
    const int n = basis.dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int i = 0; i < n; ++i) {
        const auto [j, amp] = create(basis, i, mode);
        if (j >= 0) trip.emplace_back(j, i, cplx(amp, 0.0));
    }
    SparseC out(n, n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseC field_annihilation(const FockBasis& basis, const std::vector<int>& mode_ids,
                           const std::vector<cplx>& coeff) {
    RF_REQUIRE(mode_ids.size() == coeff.size(),
               "field_annihilation: mode/coefficient size mismatch");
    const int n = basis.dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t m = 0; m < mode_ids.size(); ++m) {
        const double w = basis.grid().modes[mode_ids[m]].weight;
        for (int i = 0; i < n; ++i) {
            const auto [j, amp] = annihilate(basis, i, mode_ids[m]);
            if (j >= 0) trip.emplace_back(j, i, w * coeff[m] * amp);
        }
    }
    SparseC out(n, n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseC field_creation(const FockBasis& basis, const std::vector<int>& mode_ids,
                       const std::vector<cplx>& coeff) {
    RF_REQUIRE(mode_ids.size() == coeff.size(),
               "field_creation: mode/coefficient size mismatch");
    const int n = basis.dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t m = 0; m < mode_ids.size(); ++m) {
        const double w = basis.grid().modes[mode_ids[m]].weight;
        for (int i = 0; i < n; ++i) {
            const auto [j, amp] = create(basis, i, mode_ids[m]);
            if (j >= 0) trip.emplace_back(j, i, w * coeff[m] * amp);
        }
    }
    SparseC out(n, n);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

Eigen::VectorXd field_energy_diag(const FockBasis& basis) {
    Eigen::VectorXd d(basis.dim());
    for (int i = 0; i < basis.dim(); ++i) d(i) = basis.energy(i);
    return d;
}

Eigen::VectorXcd momentum_dot_diag(const FockBasis& basis, const Vec3c& p) {
    Eigen::VectorXcd d(basis.dim());
    for (int i = 0; i < basis.dim(); ++i) d(i) = cdot(p, basis.momentum(i));
    return d;
}

Eigen::VectorXd momentum_sq_diag(const FockBasis& basis) {
    Eigen::VectorXd d(basis.dim());
    for (int i = 0; i < basis.dim(); ++i) d(i) = basis.momentum(i).squaredNorm();
    return d;
}

Eigen::VectorXd cutoff_sharp_diag(const FockBasis& basis, double rho) {
    Eigen::VectorXd d(basis.dim());
    for (int i = 0; i < basis.dim(); ++i) d(i) = basis.energy(i) <= rho ? 1.0 : 0.0;
    return d;
}

Eigen::VectorXd cutoff_chi_diag(const FockBasis& basis, double rho) {
    Eigen::VectorXd d(basis.dim());
    for (int i = 0; i < basis.dim(); ++i) d(i) = chi_rho(basis.energy(i), rho);
    return d;
}

Eigen::VectorXd cutoff_chibar_diag(const FockBasis& basis, double rho) {
    Eigen::VectorXd d(basis.dim());
    for (int i = 0; i < basis.dim(); ++i) d(i) = chibar_rho(basis.energy(i), rho);
    return d;
}

SparseC diag_sparse(const Eigen::VectorXcd& d) {
    SparseC out(d.size(), d.size());
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int i = 0; i < d.size(); ++i)
        if (d(i) != cplx(0.0, 0.0)) trip.emplace_back(i, i, d(i));
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseC diag_sparse(const Eigen::VectorXd& d) {
    return diag_sparse(Eigen::VectorXcd(d.cast<cplx>()));
}

}  // namespace resonflow
