#pragma once
// Dense non-hermitian eigendecomposition (LAPACK zgeev), operator norms, and
// hermitian range bases shared by the Feshbach module and the oracle.

#include "resonflow/operators.hpp"

namespace resonflow {

struct DenseEig {
    Eigen::VectorXcd values;  // sorted by ascending real part, imag tiebreak
    DenseC vectors;           // right eigenvectors, columns aligned with values
};

// Full eigendecomposition of a general complex matrix. Throws on LAPACK
// failure. Column dim is capped by the caller (see oracle::dense_spectrum).
DenseEig dense_eigs(const DenseC& a, bool with_vectors = true);

// Largest singular value (dense, exact via SVD).
double operator_norm(const DenseC& a);

// Deterministic power-iteration estimate of ||A||_2 for sparse A
// (fixed starting vector, fixed iteration count on A^H A).
double operator_norm_est(const SparseC& a, int iters = 60);

// Orthonormal columns spanning the eigenspaces of a hermitian PSD matrix
// with eigenvalue > tol. Deterministic order (descending eigenvalue).
DenseC range_basis(const DenseC& herm_psd, double tol);

}  // namespace resonflow
