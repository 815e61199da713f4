// Unit tests for the atomic model, parameter validation, and the dilated
// fiber Hamiltonian conventions.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "resonflow/atom.hpp"
#include "resonflow/fock.hpp"
#include "resonflow/grid.hpp"
#include "resonflow/hamiltonian.hpp"

using namespace resonflow;

namespace {

ProblemParams reference_params(const AtomSpec& atom, double lambda0,
                               double vartheta = M_PI / 8) {
    const Vec3 p_star(0.0, 0.0, 0.5);
    return make_params(atom, lambda0, vartheta, p_star.cast<cplx>(), p_star,
                       0.25, 0.5, 1);
}

}  // namespace

TEST_CASE("two-level reference atom") {
    const AtomSpec atom = two_level_reference();
    CHECK(atom.n_levels() == 2);
    CHECK(atom.delta0 == 1.0);
    CHECK(atom.dipole_element(Vec3(1, 0, 0), 0, 1) == cplx(1.0, 0.0));
    CHECK(atom.dipole_element(Vec3(0, 1, 0), 0, 0) == cplx(0.0, 0.0));
}

TEST_CASE("atom validation rejects bad input") {
    Eigen::VectorXd e(2);
    e << 0.0, 1.0;
    Eigen::MatrixXcd ok(2, 2), non_herm(2, 2), too_big(2, 2);
    ok << 0, 1, 1, 0;
    non_herm << 0, 1, 0.5, 0;
    too_big << 0, 1.5, 1.5, 0;
    CHECK_THROWS(make_atom(e, {non_herm, ok, ok}));
    CHECK_THROWS(make_atom(e, {too_big, ok, ok}));
    Eigen::VectorXd bad_e(2);
    bad_e << 1.0, 1.0;
    CHECK_THROWS(make_atom(bad_e, {ok, ok, ok}));
}

TEST_CASE("parameter derivation and momentum domain") {
    const AtomSpec atom = two_level_reference();
    ProblemParams params = reference_params(atom, 1e-2);
    CHECK(params.mu == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_NOTHROW(domain_check(params));

    // Real displacement beyond mu.
    params.p = Vec3c(cplx(0, 0), cplx(0, 0), cplx(0.8, 0));
    CHECK_THROWS(domain_check(params));

    // Imaginary part beyond (mu/2) tan(vartheta).
    params.p = Vec3c(cplx(0, 0), cplx(0, 0), cplx(0.5, 0.2));
    CHECK_THROWS(domain_check(params));

    // Small complex displacement is inside the domain.
    params.p = Vec3c(cplx(0.01, 0.0), cplx(0, 0), cplx(0.5, 0.02));
    CHECK_NOTHROW(domain_check(params));

    CHECK_THROWS(make_params(atom, 1e-2, 0.9, Vec3c::Zero(), Vec3::Zero(), 0.25,
                             0.5, 1));  // vartheta out of range
    CHECK_THROWS(make_params(atom, 1e-2, M_PI / 8, Vec3c::Zero(), Vec3::Zero(),
                             2.0, 0.5, 1));  // rho0 above min(1, delta0)
    CHECK_THROWS(make_params(atom, 1e-2, M_PI / 8, Vec3c::Zero(), Vec3::Zero(),
                             0.25, 0.5, 5));  // i0 out of range
}

TEST_CASE("undilated Hamiltonian is hermitian") {
    const AtomSpec atom = two_level_reference();
    GridSpec spec;
    spec.n_r = 4;
    spec.n_dir = 2;
    spec.k_max = 2.0;
    const ModeGrid grid = build_mode_grid(spec);
    const FockBasis basis = build_basis(grid, 2, 2.0);

    ProblemParams params = reference_params(atom, 0.05, 0.0);
    const DenseC h = DenseC(fiber_hamiltonian(atom, basis, params));
    CHECK((h - h.adjoint()).norm() < 1e-12 * h.norm());
}

TEST_CASE("free part is diagonal with the dilated dispersion") {
    const AtomSpec atom = two_level_reference();
    GridSpec spec;
    spec.n_r = 3;
    spec.n_dir = 2;
    spec.k_max = 2.0;
    const ModeGrid grid = build_mode_grid(spec);
    const FockBasis basis = build_basis(grid, 1, 2.0);
    const ProblemParams params = reference_params(atom, 0.0);

    const Eigen::VectorXcd d = free_fiber_diag(atom, basis, params);
    const cplx emt = params.emt(), emt2 = params.emt2();
    for (int a = 0; a < 2; ++a) {
        for (int f = 0; f < basis.dim(); ++f) {
            const double r = basis.energy(f);
            const Vec3& l = basis.momentum(f);
            const cplx expect = atom.energies(a) + emt * (r - cdot(params.p, l)) +
                                emt2 * 0.5 * l.squaredNorm();
            CHECK(std::abs(d(product_index(a, f, basis.dim())) - expect) < 1e-14);
        }
    }
    // lambda0 = 0: the full Hamiltonian equals the free diagonal.
    const SparseC h = fiber_hamiltonian(atom, basis, params);
    CHECK((DenseC(h) - DenseC(Eigen::MatrixXcd(d.asDiagonal()))).norm() < 1e-15);
}

TEST_CASE("interaction matrix element matches the vertex formula") {
    const AtomSpec atom = two_level_reference();
    GridSpec spec;
    spec.n_r = 3;
    spec.n_dir = 2;
    spec.k_max = 2.0;
    spec.uv_sigma = 1.0;
    const ModeGrid grid = build_mode_grid(spec);
    const FockBasis basis = build_basis(grid, 2, 4.0);
    const ProblemParams params = reference_params(atom, 1.0);

    const SparseC hi = dilated_interaction(atom, basis, params);
    const DenseC hid = DenseC(hi);

    // <psi_1 (x) 1_x | H_int | psi_0 (x) vacuum>
    //   = -g_x(theta) w_x <psi_1|eps_x.d|psi_0> sqrt(1/w_x).
    const int x = 1;
    const PhotonMode& m = grid.modes[x];
    const int fock_one = basis.index_of({{x, 1}});
    REQUIRE(fock_one >= 0);
    const cplx g = vertex_coupling(m.abs_k, 1.0, params.theta());
    const cplx expect = -g * m.weight * atom.dipole_element(m.eps, 1, 0) *
                        std::sqrt(1.0 / m.weight);
    const cplx got = hid(product_index(1, fock_one, basis.dim()),
                         product_index(0, 0, basis.dim()));
    CHECK(std::abs(got - expect) < 1e-14 * std::abs(expect));

    // The annihilation part is the transpose pattern with +g.
    const cplx got_down = hid(product_index(0, 0, basis.dim()),
                              product_index(1, fock_one, basis.dim()));
    const cplx expect_down = g * m.weight * atom.dipole_element(m.eps, 0, 1) *
                             std::sqrt(1.0 / m.weight);
    CHECK(std::abs(got_down - expect_down) < 1e-14 * std::abs(expect_down));
}
