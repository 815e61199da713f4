#pragma once
// Wick-kernel data model: scale-attached sample grids, the infrared-weighted
// half norm, pointwise evaluation with linear interpolation in the smooth
// arguments, and group symmetrization.

#include <map>
#include <vector>

#include "resonflow/grid.hpp"
#include "resonflow/operators.hpp"

namespace resonflow {

// Argument grid for kernels at scale rho. The radial field energy r lives on
// a Chebyshev–Lobatto grid over [0, rho] (endpoints included); the field
// momentum l is reduced by rotational symmetry about a fixed axis to
//   l_par  = r * u,                u in [-1, 1]  (uniform nodes)
//   l_perp = v * r * sqrt(1 - u^2), v in [0, 1]  (uniform nodes)
// so every node satisfies |l| <= r automatically.
struct LGrid {
    double rho = 0;
    Eigen::VectorXd r;  // ascending, r(0) = 0, r(n_r-1) = rho
    Eigen::VectorXd u;
    Eigen::VectorXd v;

    int n_r() const { return static_cast<int>(r.size()); }
    int n_u() const { return static_cast<int>(u.size()); }
    int n_v() const { return static_cast<int>(v.size()); }
    int n_points() const { return n_r() * n_u() * n_v(); }
    int flat(int ir, int iu, int iv) const {
        return (ir * n_u() + iu) * n_v() + iv;
    }
    double l_par(int ir, int iu) const { return r(ir) * u(iu); }
    double l_perp(int ir, int iu, int iv) const {
        return v(iv) * r(ir) * std::sqrt(std::max(0.0, 1.0 - u(iu) * u(iu)));
    }
};

LGrid make_lgrid(double rho, int n_r, int n_u, int n_v);

// Decomposes a momentum vector into components along/transverse to axis.
struct LParPerp {
    double par = 0;
    double perp = 0;
};
LParPerp split_l(const Vec3& l, const Vec3& axis);

// Sampled kernel w_{m,n}(r, l, k_1..k_m; kt_1..kt_n). The K slots take
// exact photon-mode ids from a fixed mode list (all modes of the ambient
// ModeGrid with |k| <= rho); no interpolation happens in K. Sample layout:
// ((flat(r,u,v)) * k_dim^(m+n) + k_flat) with k_flat mixed-radix over the
// m creation slots then the n annihilation slots, each digit an index into
// `modes`. Kernels are symmetric within each slot group.
//
// Kernels produced by a decimation carry the universal compression factors
//   chi_rho(r + sum_cre |k|) * chi_rho(r + sum_ann |k|)
// (the same for every contribution to a given sample); for (0,0) kernels the
// empty sums make this chi_rho(r)^2. Storing those sharp-featured factors in
// the coarse sample grid would cost percent-level interpolation error in the
// cutoff transition zones, so such kernels set `outer_chi` and store only the
// smooth core; evaluation restores the factors analytically. Bare kernels
// (e.g. the interaction vertex) leave it false.
struct WickKernel {
    int m = 0;
    int n = 0;
    bool outer_chi = false;
    LGrid grid;
    std::vector<int> modes;     // sorted ascending mode ids
    std::vector<double> mode_abs;  // |k| per entry of `modes`
    Eigen::VectorXcd samples;

    int k_dim() const { return static_cast<int>(modes.size()); }
    long k_tuples() const;
    long sample_index(int pt_flat, long k_flat) const {
        return static_cast<long>(pt_flat) * k_tuples() + k_flat;
    }
    // Position of a mode id in `modes`, or -1 when absent.
    int slot_of(int mode_id) const;
};

// Zero-initialized kernel; modes = all grid modes with |k| <= lgrid.rho.
WickKernel make_kernel(int m, int n, const LGrid& lgrid, const ModeGrid& grid);

// Evaluation at arbitrary (r, l_par, l_perp) and exact slot mode ids:
// trilinear interpolation in (r, u, v); returns 0 for r outside [0, rho]
// (the monomial's sharp field-energy indicator) or when a requested mode is
// not carried by the kernel. slot_modes lists the m creation modes then the
// n annihilation modes.
cplx eval_kernel(const WickKernel& k, double r, double l_par, double l_perp,
                 const std::vector<int>& slot_modes);

// Same evaluation with the K-tuple index precomputed (mixed-radix over the
// slot digits); hot path for contraction sums.
cplx eval_kernel_flat(const WickKernel& k, double r, double l_par,
                      double l_perp, long k_flat);

// Averages samples over permutations within the creation group and within
// the annihilation group. Idempotent.
void symmetrize(WickKernel& k, const ModeGrid& grid);

// sup_{(r,l) nodes, K nodes} |w| / prod_slots |k_slot|^{1/2}; the (0,0) case
// degenerates to the plain sup norm. For outer_chi kernels the sup is taken
// over the evaluated kernel (core times the analytic compression factors).
double half_norm(const WickKernel& k, const ModeGrid& grid);

// Analytic piece of the (0,0) kernel that every decimation passes through
// unchanged:
//   value(r, l) = a_r r + a_par l_par + a_perp l_perp + a_l2 |l|^2.
// Polynomials of this shape are exactly the solvable part of the model,
// e^{-theta}(H_f - p.P_f) + e^{-2 theta} P_f^2 / 2 in reduced momentum
// coordinates; evaluating them in closed form spares the coarse sample grid
// from carrying the quadratic momentum dependence.
struct Free00 {
    cplx a_r{0, 0};
    cplx a_par{0, 0};
    cplx a_perp{0, 0};
    cplx a_l2{0, 0};

    cplx operator()(double r, double l_par, double l_perp) const {
        return a_r * r + a_par * l_par + a_perp * l_perp +
               a_l2 * (l_par * l_par + l_perp * l_perp);
    }
};

// A full effective Hamiltonian at one scale: kernels by (m, n) plus the
// vacuum energy E. The represented operator is sum of Wick monomials + E on
// the field-energy block H_f <= rho, where the effective (0,0) kernel is the
// analytic `free` polynomial plus the sampled (0,0) correction.
struct KernelFamily {
    double rho = 0;
    cplx E{0, 0};
    Free00 free;
    std::map<std::pair<int, int>, WickKernel> kernels;

    const WickKernel* find(int m, int n) const;
    WickKernel* find(int m, int n);

    // Full (0,0) kernel value: free part plus the interpolated correction.
    cplx w00(double r, double l_par, double l_perp) const;

    // Value of the family on the vacuum state, E + w00(0): the objective
    // whose zero in z the decimation flow tracks.
    cplx vacuum() const { return E + w00(0.0, 0.0, 0.0); }
};

// Structural checks: scales match, slot counts match keys, and the r = 0
// sample collapse (all l-nodes agree; zero unless compression-flagged)
// holds to tol. Throws on violation.
void check_family(const KernelFamily& fam, double tol = 1e-10);

// Operator-norm bound for the assembled monomial on the block H_f <= rho:
//   rho^{(m+n)/2} * sup_(r,l) sqrt( sum_K prod_x (w_x / |k_x|) |w * outer|^2 )
// from the standard creation/annihilation energy bounds (each slot costs
// H_f^{1/2} <= rho^{1/2} on the block; the mode sums are Cauchy-Schwarzed
// against the number operator). The sup is taken cell-wise: node maxima of
// the stored core times the compression factor at the cell's inner radius,
// which dominates every interpolated evaluation inside the cell.
double kernel_block_bound(const WickKernel& k, const ModeGrid& grid,
                          double rho);

}  // namespace resonflow
