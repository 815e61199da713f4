#pragma once
// First decimation: the initial Feshbach–Schur reduction of the dilated
// fiber Hamiltonian onto the tracked atomic level restricted to low field
// energy. The reduction is expanded as a Neumann series in the coupling,
// every contraction pattern is evaluated through the atomic resolvents, and
// the result is compressed into scalar Wick kernels at scale rho0.

#include <limits>
#include <map>

#include "resonflow/atom.hpp"
#include "resonflow/grid.hpp"
#include "resonflow/kernel.hpp"

namespace resonflow {

struct FirstDecOptions {
    int l_max = 4;  // highest retained interaction order (power of lambda0)
    int m_max = 2;  // highest retained output slot count m+n
    int n_r = 12;   // output kernel grid resolution
    int n_u = 5;
    int n_v = 3;
    // Internal photon lines range over the grid modes with |k| <= line_e_max.
    // Matching this to the energy cap of the reference Fock basis keeps the
    // kernel chain and the matrix oracle on the same discretized phase space.
    double line_e_max = std::numeric_limits<double>::infinity();
    // Smallest admissible |b_j| over every atomic resolvent actually applied
    // (the tracked level only counts on the shell-cutoff support). Evaluation
    // throws below it; 0 disables the check but the minimum is still tracked.
    double margin = 0.0;
};

struct FirstDecReport {
    // Smallest |b_j| encountered over all applied resolvent entries.
    double min_denominator = std::numeric_limits<double>::infinity();
    long terms_evaluated = 0;
    // Upper bound on the half-norm mass of outputs dropped by m_max.
    double dropped_mass_bound = 0.0;
    // Geometric estimate of the interaction orders beyond l_max.
    double tail_bound = 0.0;
    std::map<std::pair<int, int>, double> half_norms;  // of stored outputs
};

// Builds the effective kernel family
//   H^(0)(z) = F_chi(H_theta(p) - z, H_theta,0(p) - z)
// compressed to the tracked level, on the field block H_f <= rho0, where
// chi = P_i0 (x) chi_rho0(H_f). The solvable part contributes the analytic
// free polynomial of the family,
//   free = e^{-theta} (r - p.l) + e^{-2 theta} l^2 / 2,   E = E_i0 - z,
// and the (0,0) samples hold the interaction correction on top of it (as a
// compression-flagged kernel, i.e. weighted by chi_rho0(r)^2 on evaluation).
// Each interaction order L adds (-1)^{L+1} lambda0^L times the vacuum
// expectation of the contraction patterns of L dipole vertices interleaved
// with the diagonal atomic resolvents
//   b_j(r, l) = e^{-2 theta} l^2/2 + e^{-theta} (r - p.l) + E_j - z
// (the tracked level additionally carries chibar^2_rho0). At lambda0 = 0
// only the (0,0) kernel is emitted; the absent monomials are the zero
// operator. Preconditions: vartheta > 0, p in U_theta[p*] and parallel to
// the reduction axis p*, and z in the disk D(E_i0, mu sin(vartheta) rho0/32).
KernelFamily first_decimation(const AtomSpec& atom, const ProblemParams& params,
                              const ModeGrid& grid, cplx z,
                              const FirstDecOptions& opt = {},
                              FirstDecReport* report = nullptr);

}  // namespace resonflow
