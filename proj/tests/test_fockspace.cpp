// Unit tests for the momentum grid, the truncated Fock basis, and the basic
// operator builders.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "resonflow/fock.hpp"
#include "resonflow/grid.hpp"
#include "resonflow/operators.hpp"
#include "resonflow/quadrature.hpp"

using namespace resonflow;

namespace {

// Hand-built grid with explicit modes, for basis fixtures.
ModeGrid toy_grid(const std::vector<double>& abs_k, double weight = 1.0) {
    ModeGrid g;
    g.spec.uv_sigma = 1.0;
    for (std::size_t i = 0; i < abs_k.size(); ++i) {
        PhotonMode m;
        m.k = Vec3(0.0, 0.0, abs_k[i]);
        m.abs_k = abs_k[i];
        m.helicity = static_cast<int>(i % 2);
        m.weight = weight;
        m.eps = Vec3(1.0, 0.0, 0.0);
        g.modes.push_back(m);
    }
    return g;
}

}  // namespace

TEST_CASE("gauss_legendre integrates polynomials exactly") {
    const GaussLegendre gl = gauss_legendre(5);
    double sum_w = 0.0, x8 = 0.0;
    for (int i = 0; i < 5; ++i) {
        sum_w += gl.w[i];
        x8 += gl.w[i] * std::pow(gl.x[i], 8);
    }
    CHECK(sum_w == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(x8 == doctest::Approx(2.0 / 9.0).epsilon(1e-13));
    // Nodes ascend and are symmetric.
    for (int i = 0; i + 1 < 5; ++i) CHECK(gl.x[i] < gl.x[i + 1]);
    CHECK(gl.x[2] == 0.0);
    CHECK(gl.x[0] == doctest::Approx(-gl.x[4]).epsilon(1e-15));
}

TEST_CASE("direction factorization") {
    CHECK(direction_factorization(6) == std::pair<int, int>(2, 3));
    CHECK(direction_factorization(2) == std::pair<int, int>(1, 2));
    CHECK(direction_factorization(8) == std::pair<int, int>(2, 4));
    CHECK(direction_factorization(1) == std::pair<int, int>(1, 1));
}

TEST_CASE("polarization frame is transverse, normalized, scale invariant") {
    const Vec3 khat = Vec3(0.3, -0.5, 0.81).normalized();
    for (int hel = 0; hel < 2; ++hel) {
        const Vec3 e = polarization(khat, hel);
        CHECK(std::abs(e.dot(khat)) < 1e-14);
        CHECK(e.norm() == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(std::abs(polarization(khat, 0).dot(polarization(khat, 1))) < 1e-14);
    // Parallel-to-z fallback.
    const Vec3 ez(0.0, 0.0, 1.0);
    const Vec3 e0 = polarization(ez, 0);
    CHECK(e0.norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(e0.dot(ez)) < 1e-14);
}

TEST_CASE("mode grid reproduces radial integrals and the angular sum rule") {
    GridSpec spec;
    spec.n_r = 24;
    spec.n_dir = 6;
    spec.k_max = 4.0;
    const ModeGrid grid = build_mode_grid(spec);
    CHECK(grid.n_modes() == 24 * 6 * 2);

    // sum_x w_x exp(-|k_x|^2) = 2 * 4pi * int_0^4 r^2 e^{-r^2} dr
    //                         = 8pi * (sqrt(pi)/4 erf(4) - 2 e^{-16}).
    double s = 0.0;
    for (const auto& m : grid.modes) s += m.weight * std::exp(-m.abs_k * m.abs_k);
    const double exact =
        8.0 * M_PI * (0.25 * std::sqrt(M_PI) * std::erf(4.0) - 2.0 * std::exp(-16.0));
    CHECK(s == doctest::Approx(exact).epsilon(1e-12));

    // Angular sum rule: for any unit vector n,
    //   sum_dir w_dir sum_hel |n . eps|^2 = 8 pi / 3,
    // exact for the 2 x 3 direction product grid.
    const double target = 8.0 * M_PI / 3.0;  // = 8.377580409572781
    for (const Vec3& n : {Vec3(0, 0, 1), Vec3(1, 1, 1).normalized(),
                          Vec3(0.2, -0.7, 0.4).normalized()}) {
        double rule = 0.0;
        // Use the first radial shell only; divide out its radial weight.
        const double r0 = grid.r_nodes[0];
        const double wr0 = grid.r_weights[0] * r0 * r0;
        for (const auto& m : grid.modes) {
            if (m.abs_k != r0) continue;
            rule += m.weight / wr0 * std::pow(n.dot(m.eps), 2);
        }
        CHECK(rule == doctest::Approx(target).epsilon(1e-13));
    }
    CHECK(target == doctest::Approx(8.377580409572781).epsilon(1e-15));
}

TEST_CASE("smooth cutoff profile") {
    CHECK(cutoff_chi(0.0) == 1.0);
    CHECK(cutoff_chi(0.75) == 1.0);
    CHECK(cutoff_chi(1.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(cutoff_chi(1.3) == 0.0);
    // Strictly decreasing inside the transition window.
    double prev = cutoff_chi(0.76);
    for (double x = 0.78; x < 1.0; x += 0.02) {
        const double c = cutoff_chi(x);
        CHECK(c < prev);
        prev = c;
    }
    // chi^2 + chibar^2 = 1 across the window, in particular at 0.875 * rho.
    const double rho = 0.37;
    for (double x : {0.1, 0.7 * rho, 0.875 * rho, 0.93 * rho, 1.2 * rho}) {
        const double c = chi_rho(x, rho), cb = chibar_rho(x, rho);
        CHECK(c * c + cb * cb == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("two modes, n_max 2: six occupation states, vacuum first") {
    const ModeGrid g = toy_grid({0.5, 0.5});
    const FockBasis basis = build_basis(g, 2, 10.0);
    CHECK(basis.dim() == 6);  // {}, {0}, {1}, {00}, {01}, {11}
    CHECK(basis.state(0).empty());
    CHECK(basis.photon_count(0) == 0);
    // Deterministic order: singles before pairs, lexicographic within.
    CHECK(basis.state(1) == FockState{{0, 1}});
    CHECK(basis.state(2) == FockState{{1, 1}});
    CHECK(basis.state(3) == FockState{{0, 1}, {1, 1}});
    CHECK(basis.state(4) == FockState{{0, 2}});
    CHECK(basis.state(5) == FockState{{1, 2}});
    CHECK(basis.energy(5) == doctest::Approx(1.0));
}

TEST_CASE("energy cap removes unreachable modes") {
    const ModeGrid g = toy_grid({0.5});
    const FockBasis basis = build_basis(g, 3, 0.4);
    CHECK(basis.dim() == 1);  // vacuum only: one photon already costs 0.5
}

TEST_CASE("ladder amplitudes carry the 1/weight normalization") {
    const double w = 0.37;
    const ModeGrid g = toy_grid({0.5, 0.8}, w);
    const FockBasis basis = build_basis(g, 2, 10.0);
    const int one = basis.index_of({{0, 1}});
    const int two = basis.index_of({{0, 2}});
    REQUIRE(one >= 0);
    REQUIRE(two >= 0);

    auto [down, amp_down] = annihilate(basis, two, 0);
    CHECK(down == one);
    CHECK(amp_down == doctest::Approx(std::sqrt(2.0 / w)).epsilon(1e-14));

    auto [up, amp_up] = create(basis, one, 0);
    CHECK(up == two);
    CHECK(amp_up == doctest::Approx(std::sqrt(2.0 / w)).epsilon(1e-14));

    // Truncated-space compression: creating above n_max falls outside.
    auto [top, amp_top] = create(basis, two, 0);
    CHECK(top == -1);
    CHECK(amp_top == 0.0);

    // [a, a*] = 1/w on states whose raised image stays in the basis.
    const SparseC a = ladder_annihilation(basis, 0);
    const SparseC ad = ladder_creation(basis, 0);
    const DenseC comm = DenseC(a) * DenseC(ad) - DenseC(ad) * DenseC(a);
    CHECK(std::abs(comm(0, 0) - cplx(1.0 / w, 0.0)) < 1e-13);
    const int vac = 0;
    CHECK(std::abs(comm(vac, one)) < 1e-14);
}

TEST_CASE("state kinematics: |P_f| <= H_f and block extraction") {
    GridSpec spec;
    spec.n_r = 4;
    spec.n_dir = 2;
    spec.k_max = 1.0;
    const ModeGrid grid = build_mode_grid(spec);
    const FockBasis basis = build_basis(grid, 2, 1.5);
    for (int i = 0; i < basis.dim(); ++i)
        CHECK(basis.momentum(i).norm() <= basis.energy(i) + 1e-12);

    const auto block = basis.block_below(0.5);
    for (int i : block) CHECK(basis.energy(i) <= 0.5);
    // The block is exactly the complement of the above-threshold states.
    int above = 0;
    for (int i = 0; i < basis.dim(); ++i)
        if (basis.energy(i) > 0.5) ++above;
    CHECK(static_cast<int>(block.size()) + above == basis.dim());

    const Eigen::VectorXd hf = field_energy_diag(basis);
    for (int i = 0; i < basis.dim(); ++i) CHECK(hf(i) == basis.energy(i));

    const Eigen::VectorXd sharp = cutoff_sharp_diag(basis, 0.5);
    for (int i = 0; i < basis.dim(); ++i)
        CHECK(sharp(i) == (basis.energy(i) <= 0.5 ? 1.0 : 0.0));
}
