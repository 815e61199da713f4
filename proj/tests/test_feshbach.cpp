#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "resonflow/feshbach.hpp"
#include "support.hpp"

using namespace resonflow;
using testing::Rng;

namespace {

FeshbachPair two_by_two_pair() {
    DenseC h(2, 2), t(2, 2), p(2, 2);
    h << cplx(2, 0), cplx(1, 0), cplx(1, 0), cplx(3, 0);
    t << cplx(2, 0), cplx(0, 0), cplx(0, 0), cplx(3, 0);
    p << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0);
    return make_feshbach_pair(h, t, p);
}

}  // namespace

TEST_CASE("sharp 2x2 pair reproduces the Schur complement") {
    const FeshbachPair pair = two_by_two_pair();

    const PairReport rep = verify_pair(pair);
    CHECK(rep.ok);
    CHECK(rep.failure.empty());
    CHECK(rep.comm_tp < 1e-14);
    CHECK(rep.norm_tinv_pwp == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(rep.neumann_ok);

    const DenseC f = feshbach_map(pair);
    // Schur complement of the (2,2) block: 2 - 1*(1/3)*1 = 5/3.
    CHECK(std::abs(f(0, 0) - cplx(5.0 / 3.0, 0)) < 1e-14);
    CHECK(std::abs(f(0, 1)) < 1e-14);
    CHECK(std::abs(f(1, 0)) < 1e-14);
    CHECK(std::abs(f(1, 1) - cplx(3, 0)) < 1e-14);

    const DenseC q = q_operator(pair);
    CHECK(std::abs(q(0, 0) - cplx(1, 0)) < 1e-14);
    CHECK(std::abs(q(0, 1)) < 1e-14);
    CHECK(std::abs(q(1, 0) - cplx(-1.0 / 3.0, 0)) < 1e-14);
    CHECK(std::abs(q(1, 1)) < 1e-14);

    // Transport identity H Q = P F.
    CHECK(operator_norm(pair.h * q - pair.p * f) < 1e-13);
}

TEST_CASE("generic sharp 2x2 pair matches a - b d^-1 c") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        DenseC h(2, 2);
        h << rng.cgaussian(), rng.cgaussian(), rng.cgaussian(),
            cplx(2.0, 0) + rng.cgaussian();
        DenseC t = DenseC::Zero(2, 2);
        t(0, 0) = h(0, 0);
        t(1, 1) = h(1, 1);
        if (std::abs(h(1, 1)) < 0.3) continue;
        DenseC p = DenseC::Zero(2, 2);
        p(0, 0) = 1.0;
        const FeshbachPair pair = make_feshbach_pair(h, t, p);
        const DenseC f = feshbach_map(pair);
        const cplx schur = h(0, 0) - h(0, 1) * h(1, 0) / h(1, 1);
        CHECK(std::abs(f(0, 0) - schur) < 1e-12 * std::max(1.0, std::abs(schur)));
    }
}

TEST_CASE("zero perturbation is a fixed point") {
    Rng rng(5);
    const int n = 7;
    FeshbachPair pair = testing::random_pair(rng, n, 0.15);
    pair.h = pair.t;
    pair.w = DenseC::Zero(n, n);

    const PairReport rep = verify_pair(pair);
    CHECK(rep.ok);
    CHECK(rep.norm_tinv_pwp == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(rep.norm_pwtinv == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(rep.norm_tinv_cross == doctest::Approx(0.0).epsilon(1e-14));

    CHECK(operator_norm(feshbach_map(pair) - pair.t) < 1e-12);
    CHECK(operator_norm(q_operator(pair) - pair.p) < 1e-12);
}

TEST_CASE("invalid pairs are rejected or reported") {
    SUBCASE("non-hermitian P throws") {
        DenseC h = DenseC::Identity(2, 2), t = h, p(2, 2);
        p << cplx(1, 0), cplx(0.2, 0.1), cplx(0, 0), cplx(0, 0);
        CHECK_THROWS_WITH_AS(make_feshbach_pair(h, t, p),
                             doctest::Contains("not hermitian"),
                             std::runtime_error);
    }
    SUBCASE("P spectrum above 1 throws") {
        DenseC h = DenseC::Identity(2, 2), t = h;
        DenseC p = 1.5 * DenseC::Identity(2, 2);
        CHECK_THROWS_WITH_AS(make_feshbach_pair(h, t, p),
                             doctest::Contains("not in [0,1]"),
                             std::runtime_error);
    }
    SUBCASE("all-one P leaves Pbar empty") {
        DenseC h = DenseC::Identity(3, 3), t = h;
        DenseC p = DenseC::Identity(3, 3);
        CHECK_THROWS_WITH_AS(make_feshbach_pair(h, t, p),
                             doctest::Contains("Pbar vanishes"),
                             std::runtime_error);
    }
    SUBCASE("T singular inside ran Pbar is reported, not thrown") {
        DenseC h(2, 2), t(2, 2), p(2, 2);
        h << cplx(2, 0), cplx(0.1, 0), cplx(0.1, 0), cplx(0.2, 0);
        t << cplx(2, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0);
        p << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0);
        const PairReport rep = verify_pair(make_feshbach_pair(h, t, p));
        CHECK_FALSE(rep.ok);
        CHECK(rep.failure == "T not invertible on ran Pbar");
    }
    SUBCASE("[T,P] != 0 is reported") {
        DenseC t(2, 2), p(2, 2);
        t << cplx(1, 0), cplx(0.5, 0), cplx(0, 0), cplx(2, 0);
        p << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0);
        const PairReport rep = verify_pair(make_feshbach_pair(t, t, p));
        CHECK_FALSE(rep.ok);
        CHECK(rep.failure == "[T,P] != 0");
    }
    SUBCASE("singular H_Pbar makes the map throw with a condition estimate") {
        DenseC h(2, 2), t(2, 2), p(2, 2);
        t << cplx(2, 0), cplx(0, 0), cplx(0, 0), cplx(1, 0);
        h = t;
        h(1, 1) = 0.0;  // W = diag(0, -1) cancels T on ran Pbar
        p << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(0, 0);
        const FeshbachPair pair = make_feshbach_pair(h, t, p);
        CHECK_THROWS_WITH_AS(feshbach_map(pair),
                             doctest::Contains("numerically singular"),
                             std::runtime_error);
    }
}

TEST_CASE("smooth random pairs: transport identity and eigenvector transport") {
    Rng rng(42);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 6 + static_cast<int>(rng.uniform(0.0, 5.0));
        const FeshbachPair pair = testing::random_pair(rng, n, 0.25);
        const PairReport rep = verify_pair(pair);
        REQUIRE(rep.ok);

        const DenseC f = feshbach_map(pair);
        const DenseC q = q_operator(pair);
        const double scale =
            std::max(1.0, operator_norm(pair.h)) * std::max(1.0, operator_norm(q));
        CHECK(operator_norm(pair.h * q - pair.p * f) < 1e-11 * scale);
    }
}

TEST_CASE("eigenvalues of H are zeros of the mapped operator") {
    Rng rng(97);
    int checked = 0;
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 8;
        const FeshbachPair pair = testing::random_pair(rng, n, 0.2);
        REQUIRE(verify_pair(pair).ok);
        const DenseEig eig = dense_eigs(pair.h);
        const DenseC id = DenseC::Identity(n, n);
        const DenseC v = range_basis(pair.p, 1e-12);

        for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
            const cplx z = eig.values(i);
            FeshbachPair shifted = pair;
            shifted.h = pair.h - z * id;
            shifted.t = pair.t - z * id;
            DenseC f;
            try {
                f = feshbach_map(shifted);
            } catch (const std::runtime_error&) {
                continue;  // H_Pbar - z singular: the map is undefined here
            }
            const DenseC f_r = v.adjoint() * f * v;
            Eigen::JacobiSVD<DenseC> svd(f_r);
            const double sv_min = svd.singularValues()(f_r.rows() - 1);
            const double sv_max = svd.singularValues()(0);
            CHECK(sv_min < 1e-9 * std::max(1.0, sv_max));

            // Eigenvector transport: F phi = 0 => H (Q phi) = 0, Q phi != 0.
            Eigen::JacobiSVD<DenseC> svd_full(f, Eigen::ComputeFullV);
            const Eigen::VectorXcd phi = svd_full.matrixV().col(n - 1);
            const DenseC q = q_operator(shifted);
            const Eigen::VectorXcd qphi = q * phi;
            if (qphi.norm() > 1e-8) {
                CHECK((shifted.h * qphi).norm() < 1e-10 * std::max(1.0, qphi.norm()) *
                                                      std::max(1.0, operator_norm(shifted.h)));
            }
            ++checked;
        }
    }
    CHECK(checked >= 30);  // most eigenvalues must actually be probed
}

TEST_CASE("isospectrality scan classifies near-zeros consistently") {
    Rng rng(123);
    const int n = 10;
    const FeshbachPair pair = testing::random_pair(rng, n, 0.2);
    REQUIRE(verify_pair(pair).ok);

    const DenseEig eig = dense_eigs(pair.h, false);
    std::vector<cplx> grid;
    for (Eigen::Index i = 0; i < eig.values.size(); ++i)
        grid.push_back(eig.values(i));
    // Off-spectrum points, displaced well away from every eigenvalue.
    for (int i = 0; i < 8; ++i)
        grid.push_back(cplx(-3.5 - 0.7 * i, 2.0 + 0.3 * i));

    const IsoReport rep = isospectrality_check(pair, grid, 1e-8);
    CHECK(rep.n_disagree == 0);
    CHECK(rep.n_agree + rep.n_skipped == static_cast<int>(grid.size()));
    CHECK(rep.n_agree >= static_cast<int>(grid.size()) - 2);

    int far_points = 0;
    for (const IsoPoint& pt : rep.points)
        if (pt.pair_ok && !pt.near_h) {
            CHECK_FALSE(pt.near_f);
            ++far_points;
        }
    CHECK(far_points >= 8);
}

TEST_CASE("dense eigensolver and norm helpers") {
    DenseC a(3, 3);
    a << cplx(1, 0), cplx(2, 0), cplx(0, 0),  //
        cplx(0, 0), cplx(1, 0), cplx(0, 0),   //
        cplx(0, 0), cplx(0, 0), cplx(-2, 1);
    const DenseEig eig = dense_eigs(a);
    REQUIRE(eig.values.size() == 3);
    CHECK(std::abs(eig.values(0) - cplx(-2, 1)) < 1e-13);
    CHECK(std::abs(eig.values(1) - cplx(1, 0)) < 1e-7);  // defective pair
    CHECK(std::abs(eig.values(2) - cplx(1, 0)) < 1e-7);
    for (Eigen::Index i = 0; i < 3; ++i) {
        const Eigen::VectorXcd r =
            a * eig.vectors.col(i) - eig.values(i) * eig.vectors.col(i);
        CHECK(r.norm() < 1e-6);
    }

    Rng rng(7);
    const DenseC b = testing::random_dense(rng, 20, 20);
    SparseC bs = b.sparseView();
    CHECK(operator_norm_est(bs, 200) ==
          doctest::Approx(operator_norm(b)).epsilon(1e-6));

    DenseC herm = b * b.adjoint();
    const DenseC basis = range_basis(herm, 1e-12);
    CHECK(basis.cols() == 20);
    CHECK(operator_norm((basis.adjoint() * basis).eval() -
                        DenseC::Identity(20, 20)) < 1e-12);
}
