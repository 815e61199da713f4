#pragma once
// Internal atomic level structure (energies + dipole matrices) and the
// kinematic parameter set for one fiber problem (coupling, complex dilation
// angle, complex total momentum, base scale).

#include <array>

#include <Eigen/Dense>

#include "resonflow/common.hpp"

namespace resonflow {

struct AtomSpec {
    Eigen::VectorXd energies;               // strictly ascending E_0 < ... < E_{N-1}
    std::array<Eigen::MatrixXcd, 3> dipole; // hermitian components, ||d_s|| <= 1
    double delta0 = 0.0;                    // min_{i != j} |E_i - E_j|, cached

    int n_levels() const { return static_cast<int>(energies.size()); }

    // <psi_a | eps . d | psi_b> for a real polarization vector.
    cplx dipole_element(const Vec3& eps, int a, int b) const {
        return eps(0) * dipole[0](a, b) + eps(1) * dipole[1](a, b) +
               eps(2) * dipole[2](a, b);
    }
};

// Validates (ascending distinct energies, hermiticity, operator norm <= 1)
// and fills delta0.
AtomSpec make_atom(const Eigen::VectorXd& energies,
                   const std::array<Eigen::MatrixXcd, 3>& dipole);

// Two levels at E = (0, 1) with unit off-diagonal dipoles in every component.
AtomSpec two_level_reference();

struct ProblemParams {
    double lambda0 = 0.0;     // coupling constant, >= 0
    double vartheta = M_PI / 8;  // dilation angle; theta = i * vartheta
    Vec3c p = Vec3c::Zero();  // complex total momentum
    Vec3 p_star = Vec3::Zero();  // real center of the momentum domain, |p*| < 1
    double mu = 0.5;          // (1 - |p*|) / 2, cached by make_params
    double rho0 = 0.25;       // base scale of the decimation sequence
    double eps_rg = 0.5;      // scale exponent: rho_{j+1} = rho_j^{2 - eps_rg} ... via rho_j = rho0^{(2-eps)^j}
    int i0 = 1;               // zero-based index of the tracked level

    cplx theta() const { return cplx(0.0, vartheta); }
    cplx emt() const { return std::exp(-theta()); }    // e^{-theta}
    cplx emt2() const { return std::exp(-2.0 * theta()); }
};

// Fills mu from p_star and validates ranges (lambda0 >= 0, 0 < vartheta < pi/4,
// |p*| < 1, i0 in range, rho0 in (0, min(1, delta0)]).
ProblemParams make_params(const AtomSpec& atom, double lambda0, double vartheta,
                          const Vec3c& p, const Vec3& p_star, double rho0,
                          double eps_rg, int i0);

// Verifies the momentum-domain membership p in U_theta[p*]:
//   |p - p*| < mu  and  |Im p| < (mu / 2) tan(vartheta).
// Throws naming the violated inequality.
void domain_check(const ProblemParams& params);

// Unit vector of the momentum reduction frame: the p* direction, or z-hat
// when p* vanishes. Every kernel stores momenta split against this axis.
Vec3 reduction_axis(const ProblemParams& params);

}  // namespace resonflow
