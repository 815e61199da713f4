#pragma once
// Normal re-ordering of the decimation Neumann series: enumerates signed
// contraction patterns of products of Wick monomials interleaved with
// shell resolvents, evaluates their vacuum expectations on the kernel
// grids, and emits the effective kernel family at the next scale.

#include <array>
#include <limits>

#include "resonflow/kernel.hpp"

namespace resonflow {

// Uncontracted slot modes of one factor in a monomial product: creation
// slots are pulled left out of the product, annihilation slots right.
struct FactorSlots {
    std::vector<int> ext_create;
    std::vector<int> ext_annih;
};

// One contraction: the annihilation slot lives in factor `from`, the
// creation slot in factor `to`, with from < to (normal order).
struct ContractionLine {
    int from = 0;
    int to = 0;
    int mode = 0;
};

// Field-energy and field-momentum displacements produced by pulling every
// slot operator through to the outside. factor entries are the kernel
// arguments of each factor, gap entries the resolvent / cutoff arguments
// between factors (gap g sits after factor g; gaps 0 and L are outermost).
struct ContractionShifts {
    std::vector<double> factor_r;  // size L
    std::vector<Vec3> factor_l;
    std::vector<double> gap_r;  // size L + 1
    std::vector<Vec3> gap_l;
};

// Exact evaluation of the pull-through displacement formulas:
//   factor f : sum of ext annihilation |k| over factors before f,
//              ext creation |k| over factors after f,
//              plus lines strictly spanning f (from < f < to);
//   gap g    : ext annihilation over factors <= g, ext creation over
//              factors > g, plus lines with from <= g < to.
ContractionShifts pull_through_shifts(const ModeGrid& grid,
                                      const std::vector<FactorSlots>& factors,
                                      const std::vector<ContractionLine>& lines);

struct RewickOptions {
    int l_max = 4;  // Neumann depth of the expansion
    int m_max = 2;  // kernel order cap: outputs with m+n beyond it are dropped
    int n_r = 12;   // output grid resolution
    int n_u = 5;
    int n_v = 3;
    // Smallest admissible |w00 + E| on the support of the shell cutoff
    // (normally mu * rho_new / 2); evaluation throws below it. 0 disables.
    double margin = 0.0;
};

struct RewickReport {
    // Smallest resolvent denominator encountered on the shell support.
    double min_denominator = std::numeric_limits<double>::infinity();
    // Upper bound on the half-norm mass of outputs dropped by m_max.
    double dropped_mass_bound = 0.0;
    // Geometric estimate of the L > l_max series tail.
    double tail_bound = 0.0;
    long terms_evaluated = 0;
    std::map<std::pair<int, int>, double> half_norms;  // of stored outputs
};

// One decimation of the kernel family from scale fam.rho to rho_new < fam.rho:
//   out = T-passthrough + sum_{L>=1} (-1)^{L+1} chi W (R W)^{L-1} chi
// re-Wick-ordered, where W collects the m+n >= 1 monomials of `fam`,
// R = chibar^2_{rho_new} / (w00 + E) acts between factors, and chi is the
// smooth cutoff at rho_new. The (0,0) output holds the resampled old
// correction plus the fully contracted terms, compression-flagged like every
// other output; E and the analytic free part pass through unchanged. `axis`
// fixes the momentum reduction frame.
KernelFamily rewick(const KernelFamily& fam, const ModeGrid& grid,
                    double rho_new, const Vec3& axis, const RewickOptions& opt,
                    RewickReport* report = nullptr);

}  // namespace resonflow
