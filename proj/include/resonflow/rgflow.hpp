#pragma once
// Scale-by-scale decimation flow: the cutoff ladder, chained kernel-family
// construction at a query spectral parameter, per-scale zero-finding with
// contour certification, convergence records with enclosure radii, and
// eigenvector reconstruction through the transport operators.
//
// Every kernel is a function of z through the resolvent denominators, so
// probing the vacuum objective at a new z means re-decimating from the top;
// a chain evaluation is the unit of work here, and a flow is a sequence of
// certified zero-findings alternating with one scale step each.

#include <functional>
#include <string>
#include <vector>

#include "resonflow/atom.hpp"
#include "resonflow/firstdec.hpp"
#include "resonflow/fock.hpp"
#include "resonflow/rewick.hpp"

namespace resonflow {

// Geometric ladder of cutoff scales rho_j with companion zero-finding radii:
//   rho_{j+1} = rho_j^{2 - eps}  (exactly, by iterated evaluation),
//   r_j = mu sin(vartheta) rho_j / 32,
// so r_j / rho_j is constant along the flow.
struct ScaleSchedule {
    double rho0 = 0.5;
    double eps = 0.5;
    double r_over_rho = 0.0;  // mu sin(vartheta) / 32

    double rho(int j) const;
    double r(int j) const;
    // sum_{k > j} r_k / 2: once step j is accepted, every later iterate (and
    // the limit) stays within this radius of z^(j).
    double tail(int j) const;
};

// rho0 and eps from the problem parameters; requires rho0 < 1 so the ladder
// decreases.
ScaleSchedule make_schedule(const ProblemParams& params);

struct FlowOptions {
    int j_max = 16;            // hard cap on the number of scales
    FirstDecOptions firstdec;  // top-of-chain construction
    RewickOptions rewick;      // every subsequent scale step
    double tol_z_rel = 1e-12;  // Newton target |E(z)| < tol_z_rel*max(1,|E_i0|)
    int newton_max = 50;
    // The flow stops once the interaction block's norm bound falls below
    // this (further steps only shrink the enclosure), or exactly when no
    // photon mode survives below the next scale.
    double w_stop = 1e-13;
    bool certify_winding = true;  // 16-point contour count per accepted zero
};

// One accepted scale, with everything needed to audit the contraction
// estimates after the fact. Appended in order, never rewritten.
struct FlowStep {
    int j = 0;
    double rho = 0;     // scale of the accepted family
    cplx z{0, 0};       // z^(j)
    double step = 0;    // |z^(j) - z^(j-1)|
    double r = 0;       // admissible radius r_j at this scale
    double w_norm = 0;  // sum of block-norm bounds of the m+n >= 1 kernels
    // min |E + w00| over the next decimation's shell (pre-check value).
    double denom_margin = 0;
    double dEdz_err = 0;  // |dE/dz + 1| measured at the previous center
    int newton_iters = 0;
    int winding = -1;           // certified count (1), or -1 when skipped
    double winding_defect = 0;  // |phase sum / 2 pi - winding|
    // |E^(j)(z) - E^(j-1)(z)| at z = z^(j): realized per-scale drift of the
    // vacuum objective.
    double vacuum_drift = 0;
    double dEdz_drift = 0;  // |dE/dz(j) - dE/dz(j-1)| between accepted steps
    // min over r > 0 grid nodes of |E + w00(r, l)| / r: the realized
    // constant by which the diagonal part dominates the field energy.
    double lower_ratio = 0;
    double enclosure = 0;      // sum_{k > j} r_k / 2
    double firstdec_tail = 0;  // truncation tail bounds at the accepted z
    double rewick_tail = 0;    // (of the last decimation in the chain)
};

struct FlowRecord {
    ScaleSchedule schedule;
    std::vector<FlowStep> steps;  // append-only
    cplx z_final{0, 0};
    // |z^inf - z_final| bound: the schedule tail, or the Newton tolerance
    // when the flow terminated because the interaction vanished exactly
    // (no modes below the next scale: all later objectives are identical).
    double enclosure_radius = 0;
    bool converged = false;
    std::string abort_reason;  // empty on clean termination
    // Filled by callers after reconstruct_eigenvector; negative = not done.
    double eigenvector_residual = -1;
};

// Per-chain-evaluation diagnostics (optional output of FlowChain::family).
struct ChainDiag {
    // E^(k)(z) for k = 0..depth: vacuum objectives of every prefix.
    std::vector<cplx> vacuums;
    double denom_margin = 0;  // min shell pre-check value over chained steps
    // Smallest resolvent denominator of the top-of-chain construction; every
    // later step enforces its own margin internally.
    double min_denominator = 0;
    double firstdec_tail = 0;
    double rewick_tail = 0;  // of the final step (0 when depth = 0)
};

// Evaluation state for one scale step at fixed z.
struct RGState {
    int j = 0;            // completed decimations (family sits at rho_j)
    cplx z{0, 0};         // spectral parameter the family was built at
    KernelFamily family;  // chain value H^(j)(z)
};

// One scale step at fixed z: checks |E + w00| >= mu rho~ / 2 on the shell
// r >= 3 rho~ / 4 of the incoming family (the region the next resolvents
// occupy), then re-Wick-orders down to rho_{j+1} with that margin enforced
// on every denominator. Throws naming the violated condition. `diag`
// (optional) receives the measured margin and truncation tails.
RGState decimation_step(const RGState& state, const AtomSpec& atom,
                        const ProblemParams& params, const ModeGrid& grid,
                        const ScaleSchedule& sched, const FlowOptions& opts,
                        FlowStep* diag = nullptr);

// Rebuilds the family chain H^(0)..H^(depth) at a query z. When accepted
// centers z^(k) are supplied, membership of z in D(z^(k-1), r_k) is checked
// for every chained step, mirroring the construction's domain of validity.
class FlowChain {
  public:
    FlowChain(const AtomSpec& atom, const ProblemParams& params,
              const ModeGrid& grid, const FlowOptions& opts);

    // Vacuum objective E^(depth)(z) of the chained family.
    cplx vacuum(cplx z, int depth) const;

    // Full family at the requested depth; `all` (optional) receives the
    // intermediate families 0..depth, `diag` the per-chain diagnostics.
    KernelFamily family(cplx z, int depth,
                        std::vector<KernelFamily>* all = nullptr,
                        ChainDiag* diag = nullptr) const;

    const ScaleSchedule& schedule() const { return sched_; }
    const Vec3& axis() const { return axis_; }
    // Accepted centers so far; index k holds z^(k).
    void set_centers(std::vector<cplx> centers) {
        centers_ = std::move(centers);
    }

  private:
    const AtomSpec& atom_;
    const ProblemParams& params_;
    const ModeGrid& grid_;
    FlowOptions opts_;
    ScaleSchedule sched_;
    Vec3 axis_;
    std::vector<cplx> centers_;
};

struct ZeroResult {
    cplx z{0, 0};
    int newton_iters = 0;
    cplx dEdz{0, 0};      // measured at the search center
    double dEdz_err = 0;  // |dEdz + 1|
    int winding = -1;
    double winding_defect = 0;
    double residual = 0;  // |E(z)| at the accepted zero
};

// Newton iteration for the vacuum objective from `center`, preceded by the
// derivative pre-check |dE/dz + 1| <= slope_tol (central difference), and
// followed — when `certify` — by a 16-point winding-number count on the
// circle |z - center| = 2 r / 3, which must find exactly one zero. The
// accepted zero must stay inside that circle and within r / 2 of the
// center. Throws naming the violated condition.
ZeroResult find_zero(const std::function<cplx(cplx)>& vacuum, cplx center,
                     double r, double tol_z, double slope_tol, int newton_max,
                     bool certify);

// Full flow: alternates certified zero-finding with one scale step, from
// the top scale down, recording every accepted step. Errors abort the flow
// with the partial record returned and the reason stored; nothing throws
// out of here. Pass `resume` to continue a previous record (its accepted
// steps are trusted and not recomputed).
FlowRecord run_flow(const AtomSpec& atom, const ProblemParams& params,
                    const ModeGrid& grid, const FlowOptions& opts = {},
                    const FlowRecord* resume = nullptr);

struct Reconstruction {
    Eigen::VectorXcd psi;  // on the product basis (level x field state)
    double residual = 0;   // ||(H(p) - z_final) psi|| / ||psi||
    // Distance of the transported field-block vector from the bare vacuum
    // (below 1 certifies the limit vector cannot vanish).
    double omega_distance = 0;
};

// Transports the bare product vector psi_i0 (x) Omega through the chain of
// Q operators of every completed scale, evaluated at z_final: the deepest
// scale's Q acts first on Omega within the field block, the top-level Q
// maps the embedded result into the full product space. The residual is
// measured against the assembled fiber Hamiltonian on `basis`.
Reconstruction reconstruct_eigenvector(const AtomSpec& atom,
                                       const ProblemParams& params,
                                       const ModeGrid& grid,
                                       const FockBasis& basis,
                                       const FlowRecord& record,
                                       const FlowOptions& opts = {});

struct NondegeneracyReport {
    int count_in_disk = 0;
    double radius = 0;
    bool unique = false;
};

// Counts spectrum entries inside D(record.z_final, radius) where radius =
// max(record.enclosure_radius, min_radius); unique means exactly one.
NondegeneracyReport nondegeneracy_check(const Eigen::VectorXcd& spectrum,
                                        const FlowRecord& record,
                                        double min_radius = 0.0);

}  // namespace resonflow
