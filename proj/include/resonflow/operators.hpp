#pragma once
// Sparse operator assembly on a truncated Fock basis: ladder operators,
// field diagnostics (H_f, P_f), and sharp/smooth energy cutoffs.

#include <Eigen/Sparse>

#include "resonflow/common.hpp"
#include "resonflow/fock.hpp"

namespace resonflow {

using SparseC = Eigen::SparseMatrix<cplx>;
using DenseC = Eigen::MatrixXcd;

// Single-mode ladder operators. annihilation(x)[j,i] = <j| a_x |i>.
SparseC ladder_annihilation(const FockBasis& basis, int mode);
SparseC ladder_creation(const FockBasis& basis, int mode);

// Weighted field sums  sum_x w_x c_x a_x  and  sum_x w_x c_x a*_x  over the
// given mode subset (pass coefficients aligned with mode_ids).
SparseC field_annihilation(const FockBasis& basis, const std::vector<int>& mode_ids,
                           const std::vector<cplx>& coeff);
SparseC field_creation(const FockBasis& basis, const std::vector<int>& mode_ids,
                       const std::vector<cplx>& coeff);

// Diagonals of the field energy and the projected momentum.
Eigen::VectorXd field_energy_diag(const FockBasis& basis);
Eigen::VectorXcd momentum_dot_diag(const FockBasis& basis, const Vec3c& p);
Eigen::VectorXd momentum_sq_diag(const FockBasis& basis);

// Cutoff diagonals in the field energy: sharp indicator 1_{H_f <= rho} and
// the smooth pair chi_rho(H_f), chibar_rho(H_f).
Eigen::VectorXd cutoff_sharp_diag(const FockBasis& basis, double rho);
Eigen::VectorXd cutoff_chi_diag(const FockBasis& basis, double rho);
Eigen::VectorXd cutoff_chibar_diag(const FockBasis& basis, double rho);

SparseC diag_sparse(const Eigen::VectorXcd& d);
SparseC diag_sparse(const Eigen::VectorXd& d);

}  // namespace resonflow
