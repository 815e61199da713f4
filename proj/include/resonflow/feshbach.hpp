#pragma once
// Smooth Feshbach–Schur map on finite matrices: pair validity diagnostics,
// the map itself, the eigenvector-transport operator Q, and exact
// isospectrality scans used as a correctness oracle by the decimation flow.

#include <string>
#include <vector>

#include "resonflow/linalg.hpp"

namespace resonflow {

// A decimation pair (H, T, P): T is the solvable comparison operator,
// P a smooth hermitian weight with spectrum in [0,1], Pbar = sqrt(1 - P^2),
// W = H - T. Both P and Pbar must commute with T.
struct FeshbachPair {
    DenseC h;     // full operator
    DenseC t;     // comparison operator, [t, p] = 0
    DenseC p;     // smooth weight, hermitian, 0 <= p <= 1
    DenseC pbar;  // sqrt(1 - p^2)
    DenseC w;     // h - t
};

// Builds the pair and caches w = h - t. Throws if p is not hermitian, has
// spectrum outside [0,1] (beyond 1e-10), or if p or pbar vanishes
// identically. When pbar is omitted it is computed by hermitian functional
// calculus; sqrt(1 - x^2) has unbounded slope at x = 1, so callers that know
// the scalar profile (the usual case: both weights are functions of the same
// diagonal operator) should pass pbar explicitly — it is validated against
// p^2 + pbar^2 = 1.
FeshbachPair make_feshbach_pair(const DenseC& h, const DenseC& t,
                                const DenseC& p,
                                const DenseC& pbar = DenseC());

struct PairReport {
    bool ok = false;          // structural validity + both restricted inverses
    std::string failure;      // first failed condition, empty when ok
    double herm_defect = 0;   // ||P - P^H||
    double spec_lo = 0;       // smallest eigenvalue of P
    double spec_hi = 0;       // largest eigenvalue of P
    double comm_tp = 0;       // ||[T, P]||
    double comm_tpbar = 0;    // ||[T, Pbar]||
    double sv_t_min = 0;      // smallest singular value of T on ran Pbar
    double sv_hpbar_min = 0;  // smallest singular value of H_Pbar on ran Pbar
    // Contraction criteria for the Neumann validation of the inverse:
    double norm_tinv_pwp = 0;    // ||T^-1 Pbar W Pbar|| on ran Pbar
    double norm_pwtinv = 0;      // ||Pbar W T^-1|| on ran Pbar
    double norm_tinv_cross = 0;  // ||T^-1 Pbar W P||
    bool neumann_ok = false;     // both contraction norms < 1
};

// Checks hermiticity / spectrum of P, commutation with T, and invertibility
// of T and H_Pbar = T + Pbar W Pbar on ran Pbar (smallest singular value
// > 1e-10 x norm). Failures are reported, never thrown.
PairReport verify_pair(const FeshbachPair& pair, double tol = 1e-12);

// F = T + P W P - P W Pbar (H_Pbar)^-1 Pbar W P, the restricted inverse
// taken on the numerical range of Pbar (eigenvalues > 1e-12). The direct
// solve is cross-checked against a Neumann series whenever the contraction
// norms reported by verify_pair are < 1. Throws if H_Pbar is numerically
// singular on ran Pbar, carrying a condition estimate.
DenseC feshbach_map(const FeshbachPair& pair);

// Q = P - Pbar (H_Pbar)^-1 Pbar W P. Satisfies H Q = P F exactly in exact
// arithmetic; tests assert it to 1e-11.
DenseC q_operator(const FeshbachPair& pair);

// Applies the transport operator of a diagonal-weight pair to one vector
// without forming dense blocks: with diagonal T, P, Pbar and sparse H,
//   Q v = P v - Pbar (T + Pbar W Pbar)^{-1}|_{ran Pbar} Pbar W (P v),
// where W = H - diag(T) and the restricted inverse is a sparse LU on the
// index set with Pbar > 1e-12 (the same range convention as feshbach_map).
// Throws when the restricted solve is singular.
Eigen::VectorXcd q_apply(const SparseC& h, const Eigen::VectorXcd& t_diag,
                         const Eigen::VectorXd& p_diag,
                         const Eigen::VectorXd& pbar_diag,
                         const Eigen::VectorXcd& v);

struct IsoPoint {
    cplx z;
    double sv_h = 0;      // smallest singular value of H - z
    double sv_f = 0;      // smallest singular value of F(H-z, T-z) on ran P
    bool pair_ok = true;  // H_Pbar - z invertible, so the point is usable
    bool near_h = false;  // sv_h below tol x scale
    bool near_f = false;
};

struct IsoReport {
    std::vector<IsoPoint> points;
    int n_agree = 0;     // usable points where near_h == near_f
    int n_disagree = 0;  // usable points where they differ
    int n_skipped = 0;   // points where the shifted pair degenerates
    double tol = 0;      // relative near-zero threshold used
};

// For each z, forms the shifted pair (H - z, T - z, P) and compares the
// near-singularity of H - z with that of the mapped operator on ran P
// (range of P at eigenvalue > 1e-12). Points where H_Pbar - z itself is
// singular are skipped: the map is undefined there.
IsoReport isospectrality_check(const FeshbachPair& pair,
                               const std::vector<cplx>& z_grid,
                               double tol = 1e-9);

}  // namespace resonflow
