#include "resonflow/feshbach.hpp"

#include <cmath>

namespace resonflow {

namespace {

// Shared restricted-solve context: U spans ran Pbar, r = U^H H_Pbar U,
// and y solves r y = U^H (Pbar W P), so that the ambient correction terms
// are P W Pbar (U y) and Pbar (U y).
struct RestrictedSolve {
    DenseC u;   // n x k, orthonormal columns spanning ran Pbar
    DenseC r;   // k x k, H_Pbar restricted
    DenseC uy;  // n x n, U * r^-1 * U^H * (Pbar W P)
    double cond_est = 0;
};

DenseC h_pbar_of(const FeshbachPair& pair) {
    return pair.t + pair.pbar * pair.w * pair.pbar;
}

RestrictedSolve restricted_solve(const FeshbachPair& pair) {
    RestrictedSolve rs;
    rs.u = range_basis(pair.pbar, 1e-12);
    RF_REQUIRE(rs.u.cols() > 0, "feshbach: Pbar has empty numerical range");
    const DenseC h_pbar = h_pbar_of(pair);
    rs.r = rs.u.adjoint() * h_pbar * rs.u;

    Eigen::JacobiSVD<DenseC> svd(rs.r);
    const double sv_max = svd.singularValues()(0);
    const double sv_min = svd.singularValues()(svd.singularValues().size() - 1);
    rs.cond_est = (sv_min > 0) ? sv_max / sv_min
                               : std::numeric_limits<double>::infinity();
    RF_REQUIRE(sv_min > 1e-10 * sv_max,
               "feshbach: H_Pbar numerically singular on ran Pbar "
                   << "(condition estimate " << rs.cond_est << ")");

    const DenseC m = pair.pbar * pair.w * pair.p;
    const DenseC y = rs.r.partialPivLu().solve(rs.u.adjoint() * m);
    rs.uy = rs.u * y;
    return rs;
}

// Validates the direct solve against the Neumann expansion
//   (H_Pbar)^-1 M = sum_k (T^-1 (-Pbar W Pbar))^k T^-1 M   on ran Pbar,
// applicable when the contraction norms are < 1.
void neumann_crosscheck(const FeshbachPair& pair, const RestrictedSolve& rs) {
    const DenseC t_r = rs.u.adjoint() * pair.t * rs.u;
    Eigen::JacobiSVD<DenseC> svd_t(t_r);
    const Eigen::Index k = t_r.rows();
    if (k == 0) return;
    const double t_min = svd_t.singularValues()(k - 1);
    if (t_min <= 1e-10 * svd_t.singularValues()(0)) return;  // T singular

    const DenseC vr = rs.u.adjoint() * (pair.pbar * pair.w * pair.pbar) * rs.u;
    const Eigen::PartialPivLU<DenseC> t_lu(t_r);
    const double a = operator_norm(t_lu.solve(vr));
    if (a >= 1.0) return;  // expansion does not converge; nothing to check

    const DenseC m_r = rs.u.adjoint() * (pair.pbar * pair.w * pair.p);
    DenseC term = t_lu.solve(m_r);
    DenseC sum = term;
    const double scale = std::max(1.0, operator_norm(sum));
    double tail = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 500; ++it) {
        term = -t_lu.solve(vr * term);
        sum += term;
        tail = operator_norm(term) * a / (1.0 - a);
        if (tail < 1e-13 * scale) break;
    }
    const DenseC direct = rs.u.adjoint() * rs.uy;  // r^-1 U^H M
    const double mismatch = operator_norm(sum - direct);
    RF_REQUIRE(mismatch <= tail + 1e-9 * scale,
               "feshbach: Neumann cross-check failed, mismatch "
                   << mismatch << " exceeds tail bound " << tail);
}

}  // namespace

FeshbachPair make_feshbach_pair(const DenseC& h, const DenseC& t,
                                const DenseC& p, const DenseC& pbar) {
    RF_REQUIRE(h.rows() == h.cols() && t.rows() == t.cols() &&
                   p.rows() == p.cols() && h.rows() == t.rows() &&
                   h.rows() == p.rows(),
               "make_feshbach_pair: dimension mismatch");
    const double scale = std::max(1.0, operator_norm(p));
    RF_REQUIRE(operator_norm(p - p.adjoint()) <= 1e-12 * scale,
               "make_feshbach_pair: P is not hermitian");

    Eigen::SelfAdjointEigenSolver<DenseC> es(p);
    RF_REQUIRE(es.info() == Eigen::Success,
               "make_feshbach_pair: eigensolver failed on P");
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    RF_REQUIRE(lo >= -1e-10 && hi <= 1.0 + 1e-10,
               "make_feshbach_pair: spectrum of P is [" << lo << ", " << hi
                                                        << "], not in [0,1]");
    RF_REQUIRE(hi > 1e-12, "make_feshbach_pair: P vanishes");

    FeshbachPair pair;
    pair.h = h;
    pair.t = t;
    pair.p = p;
    if (pbar.size() > 0) {
        RF_REQUIRE(pbar.rows() == p.rows() && pbar.cols() == p.cols(),
                   "make_feshbach_pair: Pbar dimension mismatch");
        RF_REQUIRE(operator_norm(pbar - pbar.adjoint()) <= 1e-12 * scale,
                   "make_feshbach_pair: Pbar is not hermitian");
        const DenseC id = DenseC::Identity(p.rows(), p.cols());
        RF_REQUIRE(operator_norm(p * p + pbar * pbar - id) <= 1e-12 *
                       std::max(1.0, scale * scale),
                   "make_feshbach_pair: P^2 + Pbar^2 != 1");
        pair.pbar = pbar;
    } else {
        // Pbar = sqrt(1 - P^2) by functional calculus, clamping roundoff.
        Eigen::VectorXd pbar_eigs(es.eigenvalues().size());
        for (Eigen::Index i = 0; i < pbar_eigs.size(); ++i) {
            const double lam = std::min(1.0, std::max(0.0, es.eigenvalues()(i)));
            pbar_eigs(i) = std::sqrt(std::max(0.0, 1.0 - lam * lam));
        }
        pair.pbar = es.eigenvectors() * pbar_eigs.asDiagonal() *
                    es.eigenvectors().adjoint();
    }
    RF_REQUIRE(operator_norm(pair.pbar) > 1e-12,
               "make_feshbach_pair: Pbar vanishes");
    pair.w = h - t;
    return pair;
}

PairReport verify_pair(const FeshbachPair& pair, double tol) {
    PairReport rep;
    const double p_scale = std::max(1.0, operator_norm(pair.p));
    const double t_scale = std::max(1.0, operator_norm(pair.t));

    rep.herm_defect = operator_norm(pair.p - pair.p.adjoint());
    Eigen::SelfAdjointEigenSolver<DenseC> es(pair.p);
    rep.spec_lo = es.eigenvalues().minCoeff();
    rep.spec_hi = es.eigenvalues().maxCoeff();
    rep.comm_tp = operator_norm(pair.t * pair.p - pair.p * pair.t);
    rep.comm_tpbar = operator_norm(pair.t * pair.pbar - pair.pbar * pair.t);

    auto fail = [&rep](const std::string& why) {
        if (rep.failure.empty()) rep.failure = why;
    };
    if (rep.herm_defect > tol * p_scale) fail("P not hermitian");
    if (rep.spec_lo < -1e-10 || rep.spec_hi > 1.0 + 1e-10)
        fail("spectrum of P outside [0,1]");
    if (rep.spec_hi <= 1e-12) fail("P vanishes");
    if (rep.comm_tp > tol * t_scale * p_scale) fail("[T,P] != 0");
    if (rep.comm_tpbar > tol * t_scale * p_scale) fail("[T,Pbar] != 0");

    const DenseC u = range_basis(pair.pbar, 1e-12);
    if (u.cols() == 0) {
        fail("Pbar vanishes");
        return rep;
    }

    const DenseC t_r = u.adjoint() * pair.t * u;
    Eigen::JacobiSVD<DenseC> svd_t(t_r);
    rep.sv_t_min = svd_t.singularValues()(t_r.rows() - 1);
    const bool t_ok = rep.sv_t_min > 1e-10 * std::max(1e-300, svd_t.singularValues()(0));
    if (!t_ok) fail("T not invertible on ran Pbar");

    const DenseC hp_r = u.adjoint() * h_pbar_of(pair) * u;
    Eigen::JacobiSVD<DenseC> svd_h(hp_r);
    rep.sv_hpbar_min = svd_h.singularValues()(hp_r.rows() - 1);
    if (rep.sv_hpbar_min <= 1e-10 * std::max(1e-300, svd_h.singularValues()(0)))
        fail("H_Pbar not invertible on ran Pbar");

    if (t_ok) {
        const Eigen::PartialPivLU<DenseC> t_lu(t_r);
        const DenseC vr = u.adjoint() * (pair.pbar * pair.w * pair.pbar) * u;
        rep.norm_tinv_pwp = operator_norm(t_lu.solve(vr));
        rep.norm_pwtinv = operator_norm(
            (vr * t_lu.inverse()).eval());
        rep.norm_tinv_cross =
            operator_norm(t_lu.solve(u.adjoint() * (pair.pbar * pair.w * pair.p)));
        rep.neumann_ok = rep.norm_tinv_pwp < 1.0 && rep.norm_pwtinv < 1.0;
    }

    rep.ok = rep.failure.empty();
    return rep;
}

DenseC feshbach_map(const FeshbachPair& pair) {
    const RestrictedSolve rs = restricted_solve(pair);
    neumann_crosscheck(pair, rs);
    return pair.t + pair.p * pair.w * pair.p -
           pair.p * pair.w * pair.pbar * rs.uy;
}

DenseC q_operator(const FeshbachPair& pair) {
    const RestrictedSolve rs = restricted_solve(pair);
    return pair.p - pair.pbar * rs.uy;
}

Eigen::VectorXcd q_apply(const SparseC& h, const Eigen::VectorXcd& t_diag,
                         const Eigen::VectorXd& p_diag,
                         const Eigen::VectorXd& pbar_diag,
                         const Eigen::VectorXcd& v) {
    const Eigen::Index n = h.rows();
    RF_REQUIRE(h.cols() == n && t_diag.size() == n && p_diag.size() == n &&
                   pbar_diag.size() == n && v.size() == n,
               "q_apply: dimension mismatch (h " << n << "x" << h.cols()
                                                 << ", t " << t_diag.size()
                                                 << ", p " << p_diag.size()
                                                 << ", v " << v.size() << ")");
    const Eigen::VectorXcd pv = p_diag.cast<cplx>().cwiseProduct(v);
    if (pv.isZero(0.0)) return pv;
    const Eigen::VectorXcd wpv = h * pv - t_diag.cwiseProduct(pv);  // W P v

    std::vector<int> idx;
    std::vector<int> sub(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i = 0; i < n; ++i)
        if (pbar_diag(i) > 1e-12) {
            sub[static_cast<std::size_t>(i)] = static_cast<int>(idx.size());
            idx.push_back(static_cast<int>(i));
        }
    if (idx.empty()) return pv;
    const int m = static_cast<int>(idx.size());

    // H_Pbar = diag(T) + Pbar W Pbar on the retained indices; the Pbar h Pbar
    // part comes from h's nonzeros, the diagonal completion adds
    // t_i (1 - pbar_i^2).
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int cj = 0; cj < m; ++cj) {
        const int col = idx[static_cast<std::size_t>(cj)];
        for (SparseC::InnerIterator it(h, col); it; ++it) {
            const int ri = sub[static_cast<std::size_t>(it.row())];
            if (ri < 0) continue;
            trip.emplace_back(ri, cj,
                              pbar_diag(it.row()) * it.value() *
                                  pbar_diag(col));
        }
    }
    for (int cj = 0; cj < m; ++cj) {
        const int i = idx[static_cast<std::size_t>(cj)];
        trip.emplace_back(cj, cj,
                          t_diag(i) * (1.0 - pbar_diag(i) * pbar_diag(i)));
    }
    SparseC a(m, m);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();

    Eigen::SparseLU<SparseC> lu(a);
    RF_REQUIRE(lu.info() == Eigen::Success,
               "q_apply: shell operator singular on the retained range");
    Eigen::VectorXcd rhs(m);
    for (int cj = 0; cj < m; ++cj) {
        const int i = idx[static_cast<std::size_t>(cj)];
        rhs(cj) = pbar_diag(i) * wpv(i);
    }
    const Eigen::VectorXcd x = lu.solve(rhs);
    RF_REQUIRE(lu.info() == Eigen::Success, "q_apply: restricted solve failed");

    Eigen::VectorXcd out = pv;
    for (int cj = 0; cj < m; ++cj) {
        const int i = idx[static_cast<std::size_t>(cj)];
        out(i) -= pbar_diag(i) * x(cj);
    }
    return out;
}

IsoReport isospectrality_check(const FeshbachPair& pair,
                               const std::vector<cplx>& z_grid, double tol) {
    IsoReport rep;
    rep.tol = tol;
    const Eigen::Index n = pair.h.rows();
    const DenseC id = DenseC::Identity(n, n);
    const DenseC v = range_basis(pair.p, 1e-12);
    RF_REQUIRE(v.cols() > 0, "isospectrality_check: P has empty range");

    for (const cplx& z : z_grid) {
        IsoPoint pt;
        pt.z = z;
        const DenseC hz = pair.h - z * id;
        {
            Eigen::JacobiSVD<DenseC> svd(hz);
            pt.sv_h = svd.singularValues()(n - 1);
        }
        FeshbachPair shifted = pair;
        shifted.h = hz;
        shifted.t = pair.t - z * id;
        shifted.w = pair.w;  // unchanged: (H - z) - (T - z)

        DenseC f;
        try {
            f = feshbach_map(shifted);
        } catch (const std::runtime_error&) {
            pt.pair_ok = false;
            rep.points.push_back(pt);
            ++rep.n_skipped;
            continue;
        }
        const DenseC f_r = v.adjoint() * f * v;
        Eigen::JacobiSVD<DenseC> svd_f(f_r);
        pt.sv_f = svd_f.singularValues()(f_r.rows() - 1);

        const double h_scale = std::max(1.0, operator_norm(hz));
        const double f_scale = std::max(1.0, svd_f.singularValues()(0));
        pt.near_h = pt.sv_h < tol * h_scale;
        pt.near_f = pt.sv_f < tol * f_scale;
        (pt.near_h == pt.near_f) ? ++rep.n_agree : ++rep.n_disagree;
        rep.points.push_back(pt);
    }
    return rep;
}

}  // namespace resonflow
