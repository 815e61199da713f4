#include "resonflow/atom.hpp"

#include <algorithm>
#include <cmath>

namespace resonflow {

AtomSpec make_atom(const Eigen::VectorXd& energies,
                   const std::array<Eigen::MatrixXcd, 3>& dipole) {
    const int n = static_cast<int>(energies.size());
    RF_REQUIRE(n >= 1, "make_atom: need at least one level");
    AtomSpec atom;
    atom.energies = energies;
    atom.dipole = dipole;
    atom.delta0 = std::numeric_limits<double>::infinity();
    for (int i = 0; i + 1 < n; ++i) {
        RF_REQUIRE(energies(i) < energies(i + 1),
                   "make_atom: energies must be strictly ascending (E[" << i
                   << "] = " << energies(i) << " >= E[" << i + 1 << "])");
        atom.delta0 = std::min(atom.delta0, energies(i + 1) - energies(i));
    }
    if (n == 1) atom.delta0 = 1.0;  // no spacing constraint for a single level
    for (int s = 0; s < 3; ++s) {
        RF_REQUIRE(dipole[s].rows() == n && dipole[s].cols() == n,
                   "make_atom: dipole component " << s << " has wrong shape");
        const double herm = (dipole[s] - dipole[s].adjoint()).norm();
        RF_REQUIRE(herm < 1e-12 * std::max(1.0, dipole[s].norm()),
                   "make_atom: dipole component " << s
                   << " is not hermitian (defect " << herm << ")");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dipole[s]);
        const double opnorm = es.eigenvalues().cwiseAbs().maxCoeff();
        RF_REQUIRE(opnorm <= 1.0 + 1e-12,
                   "make_atom: dipole component " << s << " has operator norm "
                   << opnorm << " > 1");
    }
    return atom;
}

AtomSpec two_level_reference() {
    Eigen::VectorXd e(2);
    e << 0.0, 1.0;
    Eigen::MatrixXcd off(2, 2);
    off << 0.0, 1.0, 1.0, 0.0;
    return make_atom(e, {off, off, off});
}

ProblemParams make_params(const AtomSpec& atom, double lambda0, double vartheta,
                          const Vec3c& p, const Vec3& p_star, double rho0,
                          double eps_rg, int i0) {
    RF_REQUIRE(lambda0 >= 0.0, "make_params: lambda0 must be >= 0");
    // vartheta = 0 is admitted for the undilated (self-adjoint) problem used
    // by the oracle; the decimation flow itself requires vartheta > 0.
    RF_REQUIRE(vartheta >= 0.0 && vartheta < M_PI / 4,
               "make_params: vartheta must lie in [0, pi/4), got " << vartheta);
    RF_REQUIRE(p_star.norm() < 1.0,
               "make_params: |p*| must be < 1, got " << p_star.norm());
    RF_REQUIRE(i0 >= 0 && i0 < atom.n_levels(),
               "make_params: i0 out of range (zero-based), got " << i0);
    RF_REQUIRE(eps_rg > 0.0 && eps_rg < 1.0,
               "make_params: eps_rg must lie in (0, 1), got " << eps_rg);
    const double dmin = std::min(1.0, atom.delta0);
    RF_REQUIRE(rho0 > 0.0 && rho0 <= dmin,
               "make_params: rho0 must lie in (0, min(1, delta0)] = (0, " << dmin
               << "], got " << rho0);
    ProblemParams params;
    params.lambda0 = lambda0;
    params.vartheta = vartheta;
    params.p = p;
    params.p_star = p_star;
    params.mu = 0.5 * (1.0 - p_star.norm());
    params.rho0 = rho0;
    params.eps_rg = eps_rg;
    params.i0 = i0;
    return params;
}

void domain_check(const ProblemParams& params) {
    RF_REQUIRE(params.mu > 0.0, "domain_check: mu must be positive");
    const Vec3 re_p(params.p(0).real(), params.p(1).real(), params.p(2).real());
    const Vec3 im_p(params.p(0).imag(), params.p(1).imag(), params.p(2).imag());
    const double dist = (re_p - params.p_star).norm();
    // |p - p*| uses the full complex displacement.
    const double full_dist = std::sqrt(dist * dist + im_p.squaredNorm());
    RF_REQUIRE(full_dist < params.mu,
               "domain_check: |p - p*| = " << full_dist << " must be < mu = "
               << params.mu);
    const double im_cap = 0.5 * params.mu * std::tan(params.vartheta);
    RF_REQUIRE(im_p.norm() < im_cap || im_p.norm() == 0.0,
               "domain_check: |Im p| = " << im_p.norm()
               << " must be < (mu/2) tan(vartheta) = " << im_cap);
}

Vec3 reduction_axis(const ProblemParams& params) {
    return params.p_star.norm() > 1e-14 ? Vec3(params.p_star.normalized())
                                        : Vec3(Vec3::UnitZ());
}

}  // namespace resonflow
