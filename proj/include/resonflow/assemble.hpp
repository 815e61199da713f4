#pragma once
// Assembly of Wick monomials and whole kernel families into sparse matrices
// on a Fock basis: 1_{H_f<=rho} sum_K w_K a*(K_m) w(H_f,P_f,K) a(K_n)
// 1_{H_f<=rho}, with quadrature weights standing in for the K integrals.

#include "resonflow/fock.hpp"
#include "resonflow/kernel.hpp"

namespace resonflow {

// The functional-calculus factor is evaluated on the intermediate state
// (after annihilation, before creation), consistent with pull-through
// ordering. States pushed above the basis ceiling by creation are dropped
// (compression), and both the input and output states must satisfy
// H_f <= rho. The momentum argument is split against `axis`. If the slot
// count exceeds the basis occupancy cap the result is a zero matrix and a
// warning is emitted.
SparseC assemble_monomial(const FockBasis& basis, const WickKernel& k,
                          double rho, const Vec3& axis);

// Sum of assemble_monomial over all stored kernels plus the diagonal action
// of E and the analytic free polynomial on 1_{H_f<=rho}.
SparseC evaluate_family(const FockBasis& basis, const KernelFamily& fam,
                        const Vec3& axis);

}  // namespace resonflow
