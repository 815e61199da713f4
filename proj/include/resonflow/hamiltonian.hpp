#pragma once
// Complex-dilated fiber Hamiltonian on the product space (atom x Fock):
//   H(p) = [H_at + e^{-theta} (H_f - p.P_f) + e^{-2 theta} P_f^2 / 2]
//          + lambda0 * H_int(theta),
// with the dilated dipole interaction
//   H_int = i e^{-2 theta} sum_x w_x Lambda(e^{-theta} k_x) |k_x|^{1/2}
//              (eps_x . d) (x) (a_x - a*_x).
// Product index convention: global = atom_index * fock_dim + fock_index.

#include <vector>

#include "resonflow/atom.hpp"
#include "resonflow/operators.hpp"

namespace resonflow {

inline int product_index(int atom_idx, int fock_idx, int fock_dim) {
    return atom_idx * fock_dim + fock_idx;
}

// Gaussian form factor at the dilated argument:
//   Lambda(e^{-theta} k) = exp(-e^{-2 theta} |k|^2 / (2 sigma^2)).
cplx dilated_form_factor(double abs_k, double uv_sigma, cplx theta);

// Per-mode coupling scalar  i e^{-2 theta} Lambda(e^{-theta} k) |k|^{1/2}.
cplx vertex_coupling(double abs_k, double uv_sigma, cplx theta);

// Structure factor of the interaction, built once per (atom, basis): the
// theta-independent triplets of  w_x (eps_x . d) (x) (a_x - a*_x)  per mode.
// assemble() scales each mode block by vertex_coupling at the requested
// dilation and sums. Rebuilding across a dilation sweep is then cheap.
class InteractionSkeleton {
  public:
    InteractionSkeleton(const AtomSpec& atom, const FockBasis& basis);

    SparseC assemble(cplx theta, double uv_sigma) const;

    int dim() const { return dim_; }

  private:
    struct ModeBlock {
        double abs_k;
        std::vector<Eigen::Triplet<cplx>> trip;
    };
    int dim_ = 0;
    std::vector<ModeBlock> blocks_;
};

// One-shot builders.
SparseC dilated_interaction(const AtomSpec& atom, const FockBasis& basis,
                            const ProblemParams& params);
Eigen::VectorXcd free_fiber_diag(const AtomSpec& atom, const FockBasis& basis,
                                 const ProblemParams& params);
SparseC free_fiber_hamiltonian(const AtomSpec& atom, const FockBasis& basis,
                               const ProblemParams& params);
SparseC fiber_hamiltonian(const AtomSpec& atom, const FockBasis& basis,
                          const ProblemParams& params);

}  // namespace resonflow
