#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "resonflow/rewick.hpp"
#include "support.hpp"

using namespace resonflow;

namespace {

constexpr double kRhoOld = 1.0;
constexpr double kRhoNew = 0.4;
const cplx kVacuum(0.3, 0.0);

ModeGrid toy_grid() {
    GridSpec spec;
    spec.n_r = 3;
    spec.n_dir = 6;
    spec.k_max = 1.0;
    spec.uv_sigma = 1.0;
    return build_mode_grid(spec);
}

// Mode-dependent couplings, small enough that the expansion contracts.
cplx g_of(const ModeGrid& grid, int mode) {
    const PhotonMode& mo = grid.modes[mode];
    return cplx(0.002 + 0.001 * mo.k(2), 0.0005 * mo.k(0)) *
           std::sqrt(mo.abs_k);
}
cplx h_of(const ModeGrid& grid, int mode) {
    return -std::conj(g_of(grid, mode));
}

// Family at scale 1: w00 = r + 0.1 l_par (multilinear, so resampling and
// resolvent evaluations are interpolation-exact), plus one annihilation and
// one creation monomial with per-mode constant couplings.
KernelFamily toy_family(const ModeGrid& grid) {
    const LGrid lg = make_lgrid(kRhoOld, 4, 3, 2);
    KernelFamily fam;
    fam.rho = kRhoOld;
    fam.E = kVacuum;

    WickKernel w00 = make_kernel(0, 0, lg, grid);
    for (int ir = 0; ir < lg.n_r(); ++ir)
        for (int iu = 0; iu < lg.n_u(); ++iu)
            for (int iv = 0; iv < lg.n_v(); ++iv)
                w00.samples(lg.flat(ir, iu, iv)) =
                    lg.r(ir) + 0.1 * lg.l_par(ir, iu);
    fam.kernels.emplace(std::make_pair(0, 0), std::move(w00));

    WickKernel w01 = make_kernel(0, 1, lg, grid);
    WickKernel w10 = make_kernel(1, 0, lg, grid);
    for (int s = 0; s < w01.k_dim(); ++s)
        for (int pt = 0; pt < lg.n_points(); ++pt) {
            w01.samples(w01.sample_index(pt, s)) = g_of(grid, w01.modes[s]);
            w10.samples(w10.sample_index(pt, s)) = h_of(grid, w10.modes[s]);
        }
    fam.kernels.emplace(std::make_pair(0, 1), std::move(w01));
    fam.kernels.emplace(std::make_pair(1, 0), std::move(w10));
    return fam;
}

RewickOptions toy_options() {
    RewickOptions opt;
    opt.l_max = 2;
    opt.m_max = 2;
    opt.n_r = 5;
    opt.n_u = 3;
    opt.n_v = 2;
    opt.margin = 0.1;
    return opt;
}

// Resolvent denominator at a shifted argument: w00(r', l') + E with
// w00 = r + 0.1 l_par.
cplx toy_denominator(double r_shift, const Vec3& l_shift) {
    return r_shift + 0.1 * l_shift(2) + kVacuum;
}

// Hand-coded one-loop vacuum bubble core at output point (r, l):
//   - sum_x [r + |k_x| <= 1] w_x g_x h_x
//       chibar^2(r + |k_x|) / (w00(r + |k_x|, l + k_x) + E);
// the outer chi^2(r) compression is restored by evaluation, not stored.
cplx toy_bubble(const ModeGrid& grid, double r, const Vec3& l) {
    cplx sum(0, 0);
    for (int x = 0; x < grid.n_modes(); ++x) {
        const PhotonMode& mo = grid.modes[x];
        const double arg = r + mo.abs_k;
        if (arg > kRhoOld * (1 + 1e-12)) continue;
        const double cb2 = chibar_sq_rho(arg, kRhoNew);
        if (cb2 == 0.0) continue;
        sum += mo.weight * g_of(grid, x) * h_of(grid, x) * cb2 /
               toy_denominator(arg, l + mo.k);
    }
    return -sum;
}

}  // namespace

TEST_CASE("a purely diagonal family passes through unchanged") {
    const ModeGrid grid = toy_grid();
    const LGrid lg = make_lgrid(kRhoOld, 4, 3, 2);
    KernelFamily fam;
    fam.rho = kRhoOld;
    fam.E = cplx(0.25, -0.01);
    WickKernel w00 = make_kernel(0, 0, lg, grid);
    for (int ir = 0; ir < lg.n_r(); ++ir)
        for (int iu = 0; iu < lg.n_u(); ++iu)
            for (int iv = 0; iv < lg.n_v(); ++iv)
                w00.samples(lg.flat(ir, iu, iv)) =
                    0.7 * lg.r(ir) - 0.2 * lg.l_par(ir, iu);
    fam.kernels.emplace(std::make_pair(0, 0), std::move(w00));

    RewickReport rep;
    const KernelFamily out =
        rewick(fam, grid, 0.35, Vec3::UnitZ(), toy_options(), &rep);

    CHECK(out.rho == 0.35);
    CHECK(out.E == fam.E);
    CHECK(out.kernels.size() == 1);
    const WickKernel* w = out.find(0, 0);
    REQUIRE(w);
    for (int ir = 0; ir < w->grid.n_r(); ++ir)
        for (int iu = 0; iu < w->grid.n_u(); ++iu)
            for (int iv = 0; iv < w->grid.n_v(); ++iv) {
                const cplx want = 0.7 * w->grid.r(ir) -
                                  0.2 * w->grid.l_par(ir, iu);
                CHECK(std::abs(w->samples(w->grid.flat(ir, iu, iv)) - want) <
                      1e-13);
            }
    CHECK(rep.terms_evaluated == 0);
    CHECK(rep.dropped_mass_bound == 0.0);
    CHECK(rep.tail_bound == 0.0);
    CHECK(std::isinf(rep.min_denominator));
}

TEST_CASE("second-order contractions match direct mode sums") {
    const ModeGrid grid = toy_grid();
    const KernelFamily fam = toy_family(grid);
    RewickReport rep;
    const KernelFamily out =
        rewick(fam, grid, kRhoNew, Vec3::UnitZ(), toy_options(), &rep);

    const Vec3 eperp = Vec3::UnitX();  // reduction frame partner of UnitZ

    SUBCASE("the vacuum energy passes through unchanged") {
        CHECK(out.E == kVacuum);
    }

    SUBCASE("the (0,0) kernel is passthrough plus bubble core") {
        const WickKernel* w = out.find(0, 0);
        REQUIRE(w);
        CHECK(w->outer_chi);
        for (int ir = 0; ir < w->grid.n_r(); ++ir)
            for (int iu = 0; iu < w->grid.n_u(); ++iu)
                for (int iv = 0; iv < w->grid.n_v(); ++iv) {
                    const double r = w->grid.r(ir);
                    const Vec3 l = w->grid.l_par(ir, iu) * Vec3::UnitZ() +
                                   w->grid.l_perp(ir, iu, iv) * eperp;
                    const cplx want = (r + 0.1 * l(2)) + toy_bubble(grid, r, l);
                    CHECK(std::abs(w->samples(w->grid.flat(ir, iu, iv)) -
                                   want) < 1e-13);
                }
    }

    SUBCASE("evaluation of the (0,0) output weighs in the new cutoff") {
        const WickKernel* w = out.find(0, 0);
        REQUIRE(w);
        // Probe in the transition zone of the new scale, at a grid radius so
        // only the analytic factor distinguishes eval from the stored core.
        const int ir = w->grid.n_r() - 2;
        const double r = w->grid.r(ir);
        const double chi = chi_rho(r, kRhoNew);
        CHECK(chi < 1.0);
        CHECK(chi > 0.0);
        const cplx core = w->samples(w->grid.flat(ir, 0, 0));
        const double lpar = w->grid.l_par(ir, 0);
        const double lperp = w->grid.l_perp(ir, 0, 0);
        const cplx got = eval_kernel(*w, r, lpar, lperp, {});
        CHECK(std::abs(got - chi * chi * core) < 1e-13);
    }

    SUBCASE("single-monomial outputs store the core; eval restores cutoffs") {
        const WickKernel* w = out.find(0, 1);
        REQUIRE(w);
        CHECK(w->outer_chi);
        for (int s = 0; s < w->k_dim(); ++s) {
            const double ak = grid.modes[w->modes[s]].abs_k;
            const cplx g = g_of(grid, w->modes[s]);
            for (int ir = 0; ir < w->grid.n_r(); ++ir)
                for (int iu = 0; iu < w->grid.n_u(); ++iu)
                    for (int iv = 0; iv < w->grid.n_v(); ++iv) {
                        const double r = w->grid.r(ir);
                        // Outside the compression support the core is never
                        // consumed and stays zero.
                        const cplx want = r <= kRhoNew - ak ? g : cplx(0, 0);
                        const cplx got = w->samples(w->sample_index(
                            w->grid.flat(ir, iu, iv), s));
                        CHECK(std::abs(got - want) < 1e-14);
                    }
            const cplx evaluated = eval_kernel(*w, 0.1, 0.03, 0.02,
                                               {w->modes[s]});
            const cplx expect = chi_rho(0.1, kRhoNew) *
                                chi_rho(0.1 + ak, kRhoNew) * g;
            if (0.1 <= kRhoNew - ak)
                CHECK(std::abs(evaluated - expect) < 1e-14);
        }
    }

    SUBCASE("double-annihilation output averages the two resolvent routes") {
        const WickKernel* w = out.find(0, 2);
        REQUIRE(w);
        const int kd = w->k_dim();
        for (int sx = 0; sx < kd; ++sx)
            for (int sy = 0; sy < kd; ++sy) {
                const PhotonMode& mx = grid.modes[w->modes[sx]];
                const PhotonMode& my = grid.modes[w->modes[sy]];
                const cplx gg =
                    g_of(grid, w->modes[sx]) * g_of(grid, w->modes[sy]);
                for (int ir = 0; ir < w->grid.n_r(); ++ir) {
                    const double r = w->grid.r(ir);
                    const int iu = 1, iv = 0;
                    const Vec3 l = w->grid.l_par(ir, iu) * Vec3::UnitZ() +
                                   w->grid.l_perp(ir, iu, iv) * eperp;
                    cplx want(0, 0);
                    auto route = [&](const PhotonMode& first) {
                        const double arg = r + first.abs_k;
                        if (arg > kRhoOld * (1 + 1e-12)) return cplx(0, 0);
                        return cplx(chibar_sq_rho(arg, kRhoNew), 0) /
                               toy_denominator(arg, l + first.k);
                    };
                    if (r <= kRhoNew - mx.abs_k - my.abs_k)
                        want = -0.5 * gg * (route(mx) + route(my));
                    const cplx got = w->samples(w->sample_index(
                        w->grid.flat(ir, iu, iv),
                        static_cast<long>(sx) * kd + sy));
                    CHECK(std::abs(got - want) < 1e-14);
                }
            }
    }

    SUBCASE("report tracks denominators and certifies the tail") {
        CHECK(rep.terms_evaluated > 0);
        CHECK(rep.min_denominator >= 0.1);
        CHECK(rep.min_denominator < 1.7);
        CHECK(std::isfinite(rep.tail_bound));
        CHECK(rep.tail_bound > 0.0);
        CHECK(rep.dropped_mass_bound == 0.0);  // nothing beyond m_max = 2
        CHECK(rep.half_norms.count({0, 1}) == 1);
    }
}

TEST_CASE("zero interaction kernels leave the diagonal family fixed") {
    const ModeGrid grid = toy_grid();
    KernelFamily fam = toy_family(grid);
    fam.find(0, 1)->samples.setZero();
    fam.find(1, 0)->samples.setZero();

    RewickReport rep;
    const KernelFamily out =
        rewick(fam, grid, kRhoNew, Vec3::UnitZ(), toy_options(), &rep);

    CHECK(out.E == kVacuum);
    const WickKernel* w = out.find(0, 0);
    REQUIRE(w);
    for (int ir = 0; ir < w->grid.n_r(); ++ir)
        for (int iu = 0; iu < w->grid.n_u(); ++iu)
            for (int iv = 0; iv < w->grid.n_v(); ++iv) {
                const cplx want = w->grid.r(ir) +
                                  0.1 * w->grid.l_par(ir, iu);
                CHECK(std::abs(w->samples(w->grid.flat(ir, iu, iv)) - want) <
                      1e-13);
            }
    for (const auto& [key, k] : out.kernels)
        if (key.first + key.second > 0)
            CHECK(half_norm(k, grid) == 0.0);
}

TEST_CASE("mass dropped by the order cap shrinks as the cap grows") {
    const ModeGrid grid = toy_grid();
    const KernelFamily fam = toy_family(grid);
    double prev = std::numeric_limits<double>::infinity();
    for (int m_max = 0; m_max <= 2; ++m_max) {
        RewickOptions opt = toy_options();
        opt.m_max = m_max;
        RewickReport rep;
        rewick(fam, grid, kRhoNew, Vec3::UnitZ(), opt, &rep);
        CHECK(rep.dropped_mass_bound >= 0.0);
        CHECK(rep.dropped_mass_bound <= prev * (1 + 1e-12));
        prev = rep.dropped_mass_bound;
    }
    CHECK(prev == 0.0);  // m_max = 2 stores every order the inputs generate
}

TEST_CASE("denominators below the margin abort with a located report") {
    const ModeGrid grid = toy_grid();
    KernelFamily fam = toy_family(grid);
    fam.E = cplx(-0.35, 0.0);  // w00 + E vanishes inside the shell
    RewickOptions opt = toy_options();
    opt.margin = 0.5;
    CHECK_THROWS_WITH_AS(
        rewick(fam, grid, kRhoNew, Vec3::UnitZ(), opt, nullptr),
        doctest::Contains("below margin"), std::runtime_error);
}

TEST_CASE("results are byte-identical for any thread count") {
    const ModeGrid grid = toy_grid();
    const KernelFamily fam = toy_family(grid);

    auto run = [&](const char* threads) {
        ::setenv("RESONFLOW_THREADS", threads, 1);
        RewickReport rep;
        KernelFamily out =
            rewick(fam, grid, kRhoNew, Vec3::UnitZ(), toy_options(), &rep);
        ::unsetenv("RESONFLOW_THREADS");
        return std::make_pair(std::move(out), rep);
    };
    const auto [out1, rep1] = run("1");
    const auto [out3, rep3] = run("3");

    CHECK(out1.E == out3.E);
    REQUIRE(out1.kernels.size() == out3.kernels.size());
    for (const auto& [key, k1] : out1.kernels) {
        const WickKernel* k3 = out3.find(key.first, key.second);
        REQUIRE(k3);
        CHECK((k1.samples - k3->samples).norm() == 0.0);
    }
    CHECK(rep1.min_denominator == rep3.min_denominator);
    CHECK(rep1.terms_evaluated == rep3.terms_evaluated);
    CHECK(rep1.dropped_mass_bound == rep3.dropped_mass_bound);
    CHECK(rep1.tail_bound == rep3.tail_bound);
}
