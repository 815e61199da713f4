// Decimation flow driver: the cutoff ladder, chained family construction at
// a query spectral parameter, certified per-scale zero-finding, flow records
// with enclosure radii, and eigenvector reconstruction through the transport
// operators.

#include "resonflow/rgflow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "resonflow/assemble.hpp"
#include "resonflow/feshbach.hpp"
#include "resonflow/hamiltonian.hpp"

namespace resonflow {

namespace {

constexpr double kDomainSlack = 1.0 + 1e-9;

// Minimum of |E + w00| over the closed shell 3 rho_new / 4 <= r <= rho of
// the incoming family, scanned across the physical momentum range |l| <= r:
// the region every resolvent denominator of the next re-Wick ordering
// occupies.
double shell_margin(const KernelFamily& fam, double rho_new) {
    const int nr = 33, nu = 9, nv = 5;
    const double r_lo = 0.75 * rho_new;
    const double r_hi = fam.rho;
    double worst = std::numeric_limits<double>::infinity();
    for (int ir = 0; ir < nr; ++ir) {
        const double r =
            r_lo + (r_hi - r_lo) * static_cast<double>(ir) / (nr - 1);
        for (int iu = 0; iu < nu; ++iu) {
            const double u = -1.0 + 2.0 * static_cast<double>(iu) / (nu - 1);
            const double s = r * std::sqrt(std::max(0.0, 1.0 - u * u));
            for (int iv = 0; iv < nv; ++iv) {
                const double lperp = s * static_cast<double>(iv) / (nv - 1);
                worst = std::min(worst,
                                 std::abs(fam.E + fam.w00(r, r * u, lperp)));
            }
        }
    }
    return worst;
}

// Sum of assembled-block norm bounds over the interaction kernels.
double w_norm_bound(const KernelFamily& fam, const ModeGrid& grid) {
    double sum = 0.0;
    for (const auto& [key, k] : fam.kernels)
        if (key.first + key.second >= 1)
            sum += kernel_block_bound(k, grid, fam.rho);
    return sum;
}

// min over r > 0 grid nodes of |E + w00(r, l)| / r: the realized constant by
// which the diagonal part dominates the field energy.
double lower_ratio_bound(const KernelFamily& fam) {
    const WickKernel* w00 = fam.find(0, 0);
    if (!w00) return 0.0;
    const LGrid& g = w00->grid;
    double worst = std::numeric_limits<double>::infinity();
    for (int ir = 1; ir < g.n_r(); ++ir) {
        const double r = g.r(ir);
        for (int iu = 0; iu < g.n_u(); ++iu) {
            const double u = g.u(iu);
            const double s = r * std::sqrt(std::max(0.0, 1.0 - u * u));
            for (int iv = 0; iv < g.n_v(); ++iv)
                worst = std::min(
                    worst,
                    std::abs(fam.E + fam.w00(r, r * u, s * g.v(iv))) / r);
        }
    }
    return worst;
}

}  // namespace

double ScaleSchedule::rho(int j) const {
    RF_REQUIRE(j >= 0, "ScaleSchedule: negative step index " << j);
    // Iterated evaluation keeps rho(j + 1) == pow(rho(j), 2 - eps) exact in
    // floating point; the nesting and shell checks rely on that identity.
    double x = rho0;
    for (int k = 0; k < j; ++k) x = std::pow(x, 2.0 - eps);
    return x;
}

double ScaleSchedule::r(int j) const { return r_over_rho * rho(j); }

double ScaleSchedule::tail(int j) const {
    double sum = 0.0;
    double rho_k = rho(j + 1);
    for (int k = 0; k < 4096; ++k) {
        const double term = 0.5 * r_over_rho * rho_k;
        sum += term;
        if (term <= 1e-18 * sum || term < 1e-300) break;
        rho_k = std::pow(rho_k, 2.0 - eps);
    }
    return sum;
}

ScaleSchedule make_schedule(const ProblemParams& params) {
    RF_REQUIRE(params.rho0 > 0.0 && params.rho0 < 1.0,
               "make_schedule: base scale must lie in (0, 1) for the ladder "
               "to decrease, got "
                   << params.rho0);
    RF_REQUIRE(params.eps_rg > 0.0 && params.eps_rg < 1.0,
               "make_schedule: scale exponent must lie in (0, 1), got "
                   << params.eps_rg);
    ScaleSchedule s;
    s.rho0 = params.rho0;
    s.eps = params.eps_rg;
    s.r_over_rho = params.mu * std::sin(params.vartheta) / 32.0;
    return s;
}

RGState decimation_step(const RGState& state, const AtomSpec& atom,
                        const ProblemParams& params, const ModeGrid& grid,
                        const ScaleSchedule& sched, const FlowOptions& opts,
                        FlowStep* diag) {
    (void)atom;
    const double rho_here = sched.rho(state.j);
    RF_REQUIRE(std::abs(state.family.rho - rho_here) <=
                   1e-12 * std::max(1.0, rho_here),
               "decimation_step: family scale " << state.family.rho
                                                << " does not match schedule "
                                                   "scale "
                                                << rho_here << " at step "
                                                << state.j);
    const double rho_new = sched.rho(state.j + 1);
    const double need = 0.5 * params.mu * rho_new;
    const double margin = shell_margin(state.family, rho_new);
    RF_REQUIRE(margin >= need,
               "decimation_step: vacuum denominator reaches "
                   << margin << " on the shell r >= " << 0.75 * rho_new
                   << ", below the re-Wick-ordering margin " << need);
    RewickOptions ro = opts.rewick;
    ro.margin = need;
    RewickReport rep;
    RGState out;
    out.j = state.j + 1;
    out.z = state.z;
    out.family =
        rewick(state.family, grid, rho_new, reduction_axis(params), ro, &rep);
    if (diag) {
        diag->denom_margin = margin;
        diag->rewick_tail = rep.tail_bound + rep.dropped_mass_bound;
    }
    return out;
}

FlowChain::FlowChain(const AtomSpec& atom, const ProblemParams& params,
                     const ModeGrid& grid, const FlowOptions& opts)
    : atom_(atom),
      params_(params),
      grid_(grid),
      opts_(opts),
      sched_(make_schedule(params)),
      axis_(reduction_axis(params)) {}

cplx FlowChain::vacuum(cplx z, int depth) const {
    return family(z, depth).vacuum();
}

KernelFamily FlowChain::family(cplx z, int depth,
                               std::vector<KernelFamily>* all,
                               ChainDiag* diag) const {
    RF_REQUIRE(depth >= 0, "FlowChain: negative chain depth " << depth);
    for (int k = 1; k <= depth && k - 1 < static_cast<int>(centers_.size());
         ++k)
        RF_REQUIRE(std::abs(z - centers_[k - 1]) <= sched_.r(k) * kDomainSlack,
                   "FlowChain: z = " << z
                                     << " lies outside the validity disk of "
                                        "scale step "
                                     << k << " (center " << centers_[k - 1]
                                     << ", radius " << sched_.r(k) << ")");
    if (all) all->clear();
    if (diag) *diag = ChainDiag{};

    FirstDecReport fdrep;
    KernelFamily fam =
        first_decimation(atom_, params_, grid_, z, opts_.firstdec, &fdrep);
    if (diag) {
        diag->vacuums.push_back(fam.vacuum());
        diag->denom_margin = std::numeric_limits<double>::infinity();
        diag->min_denominator = fdrep.min_denominator;
        diag->firstdec_tail = fdrep.tail_bound + fdrep.dropped_mass_bound;
    }
    if (all) all->push_back(fam);

    for (int k = 1; k <= depth; ++k) {
        RGState st;
        st.j = k - 1;
        st.z = z;
        st.family = std::move(fam);
        FlowStep sd;
        RGState next =
            decimation_step(st, atom_, params_, grid_, sched_, opts_, &sd);
        fam = std::move(next.family);
        if (diag) {
            diag->vacuums.push_back(fam.vacuum());
            diag->denom_margin = std::min(diag->denom_margin, sd.denom_margin);
            diag->rewick_tail = sd.rewick_tail;
        }
        if (all) all->push_back(fam);
    }
    return fam;
}

ZeroResult find_zero(const std::function<cplx(cplx)>& vacuum, cplx center,
                     double r, double tol_z, double slope_tol, int newton_max,
                     bool certify) {
    RF_REQUIRE(r > 0.0, "find_zero: search radius must be positive, got " << r);
    RF_REQUIRE(tol_z > 0.0,
               "find_zero: tolerance must be positive, got " << tol_z);

    ZeroResult out;
    // Central difference at the center; h is far enough above the Newton
    // tolerance that cancellation is harmless, far enough below r that the
    // probes stay deep inside the validity disk.
    const double h = 1e-3 * r;
    const cplx d0 = (vacuum(center + h) - vacuum(center - h)) / (2.0 * h);
    out.dEdz = d0;
    out.dEdz_err = std::abs(d0 + 1.0);
    RF_REQUIRE(out.dEdz_err <= slope_tol,
               "find_zero: vacuum objective slope "
                   << d0 << " strays from -1 by " << out.dEdz_err
                   << ", beyond the admissible " << slope_tol);

    const double disk = 2.0 * r / 3.0;
    cplx zk = center;
    cplx fk = vacuum(zk);
    cplx d = d0;
    int it = 0;
    while (std::abs(fk) >= tol_z) {
        RF_REQUIRE(it < newton_max,
                   "find_zero: Newton stalled at |objective| = "
                       << std::abs(fk) << " after " << newton_max
                       << " iterations (target " << tol_z << ")");
        RF_REQUIRE(std::abs(d) >= 0.25,
                   "find_zero: objective derivative collapsed to " << d);
        const cplx zn = zk - fk / d;
        RF_REQUIRE(std::abs(zn - center) <= disk * kDomainSlack,
                   "find_zero: Newton iterate left the certification disk of "
                   "radius "
                       << disk);
        const cplx fn = vacuum(zn);
        if (std::abs(zn - zk) > 0.0) d = (fn - fk) / (zn - zk);
        zk = zn;
        fk = fn;
        ++it;
    }
    out.z = zk;
    out.newton_iters = it;
    out.residual = std::abs(fk);
    RF_REQUIRE(std::abs(zk - center) <= disk,
               "find_zero: accepted zero sits outside the certification disk");

    if (certify) {
        // Winding count of the objective around the certification circle via
        // accumulated principal-branch phase increments. With the slope
        // pinned near -1 each increment stays far from a half turn, where
        // the count would be ambiguous; the residual defect of the phase sum
        // is recorded for auditing.
        constexpr int kPts = 16;
        std::array<cplx, kPts> vals;
        for (int i = 0; i < kPts; ++i) {
            const double a = 2.0 * M_PI * static_cast<double>(i) / kPts;
            vals[static_cast<std::size_t>(i)] =
                vacuum(center + disk * cplx(std::cos(a), std::sin(a)));
            RF_REQUIRE(std::abs(vals[static_cast<std::size_t>(i)]) > 0.0,
                       "find_zero: objective vanishes on the certification "
                       "circle");
        }
        double total = 0.0;
        for (int i = 0; i < kPts; ++i) {
            const double darg = std::arg(
                vals[static_cast<std::size_t>((i + 1) % kPts)] /
                vals[static_cast<std::size_t>(i)]);
            RF_REQUIRE(std::abs(darg) < 0.9 * M_PI,
                       "find_zero: phase step " << darg
                                                << " between contour points "
                                                   "is too close to a half "
                                                   "turn to count reliably");
            total += darg;
        }
        const double w = total / (2.0 * M_PI);
        out.winding = static_cast<int>(std::lround(w));
        out.winding_defect = std::abs(w - out.winding);
        RF_REQUIRE(out.winding == 1,
                   "find_zero: winding number "
                       << out.winding
                       << " on the certification circle, expected exactly one "
                          "zero");
    }
    return out;
}

FlowRecord run_flow(const AtomSpec& atom, const ProblemParams& params,
                    const ModeGrid& grid, const FlowOptions& opts,
                    const FlowRecord* resume) {
    FlowRecord rec;
    const cplx e_i0(atom.energies(params.i0), 0.0);
    try {
        rec.schedule = make_schedule(params);
        rec.z_final = e_i0;

        std::vector<cplx> centers;
        cplx z_prev = e_i0;
        cplx dEdz_prev(0.0, 0.0);
        bool have_prev_slope = false;
        if (resume) {
            RF_REQUIRE(resume->abort_reason.empty(),
                       "run_flow: cannot resume an aborted record ("
                           << resume->abort_reason << ")");
            RF_REQUIRE(resume->schedule.rho0 == rec.schedule.rho0 &&
                           resume->schedule.eps == rec.schedule.eps &&
                           resume->schedule.r_over_rho ==
                               rec.schedule.r_over_rho,
                       "run_flow: resume record was produced under a "
                       "different scale schedule");
            rec.steps = resume->steps;
            for (const FlowStep& s : rec.steps) centers.push_back(s.z);
            if (!rec.steps.empty()) {
                z_prev = rec.steps.back().z;
                rec.z_final = z_prev;
                rec.enclosure_radius = rec.steps.back().enclosure;
            }
        }

        const double tol_z = opts.tol_z_rel * std::max(1.0, std::abs(e_i0));
        FlowChain chain(atom, params, grid, opts);

        for (int j = static_cast<int>(rec.steps.size()); j < opts.j_max; ++j) {
            const double rj = rec.schedule.r(j);
            chain.set_centers(centers);
            const auto objective = [&chain, j](cplx z) {
                return chain.vacuum(z, j);
            };
            const double slope_tol = (j == 0) ? 0.25 : 0.5;
            const ZeroResult zr =
                find_zero(objective, z_prev, rj, tol_z, slope_tol,
                          opts.newton_max, opts.certify_winding);
            RF_REQUIRE(std::abs(zr.z - z_prev) < 0.5 * rj,
                       "run_flow: accepted zero at scale step "
                           << j << " moved " << std::abs(zr.z - z_prev)
                           << ", at least half the admissible radius " << rj);

            ChainDiag cd;
            const KernelFamily fam = chain.family(zr.z, j, nullptr, &cd);

            FlowStep st;
            st.j = j;
            st.rho = rec.schedule.rho(j);
            st.z = zr.z;
            st.step = std::abs(zr.z - z_prev);
            st.r = rj;
            st.w_norm = w_norm_bound(fam, grid);
            st.denom_margin = shell_margin(fam, rec.schedule.rho(j + 1));
            st.dEdz_err = zr.dEdz_err;
            st.newton_iters = zr.newton_iters;
            st.winding = zr.winding;
            st.winding_defect = zr.winding_defect;
            if (j >= 1 && cd.vacuums.size() >= 2)
                st.vacuum_drift = std::abs(cd.vacuums[static_cast<std::size_t>(j)] -
                                           cd.vacuums[static_cast<std::size_t>(j - 1)]);
            st.dEdz_drift =
                have_prev_slope ? std::abs(zr.dEdz - dEdz_prev) : 0.0;
            st.lower_ratio = lower_ratio_bound(fam);
            st.enclosure = rec.schedule.tail(j);
            st.firstdec_tail = cd.firstdec_tail;
            st.rewick_tail = cd.rewick_tail;
            rec.steps.push_back(st);

            rec.z_final = zr.z;
            rec.enclosure_radius = st.enclosure;
            centers.push_back(zr.z);
            z_prev = zr.z;
            dEdz_prev = zr.dEdz;
            have_prev_slope = true;

            // Termination. When no photon mode survives below the next scale
            // the interaction vanishes identically there, so every deeper
            // objective is the same function of z and the accepted zero is
            // final up to the Newton tolerance. The same applies when the
            // kernel norms are exactly zero already. A norm below w_stop
            // merely stops the descent (w_stop < 0 disables that and lets
            // the flow run to j_max or mode exhaustion).
            const bool no_modes =
                grid.modes_below(rec.schedule.rho(j + 1) * kDomainSlack)
                    .empty();
            const bool exact =
                no_modes || (st.w_norm == 0.0 && opts.w_stop >= 0.0);
            if (exact) {
                rec.converged = true;
                rec.enclosure_radius = std::max(tol_z, zr.residual);
                break;
            }
            if (opts.w_stop >= 0.0 && st.w_norm <= opts.w_stop) {
                rec.converged = true;
                break;
            }
        }
        if (rec.abort_reason.empty() && !rec.converged)
            // j_max exhausted: a clean, certified partial flow.
            rec.converged = !rec.steps.empty();
    } catch (const std::exception& e) {
        rec.abort_reason = e.what();
        rec.converged = false;
    }
    return rec;
}

Reconstruction reconstruct_eigenvector(const AtomSpec& atom,
                                       const ProblemParams& params,
                                       const ModeGrid& grid,
                                       const FockBasis& basis,
                                       const FlowRecord& record,
                                       const FlowOptions& opts) {
    RF_REQUIRE(!record.steps.empty(),
               "reconstruct_eigenvector: flow record holds no accepted steps");
    RF_REQUIRE(record.abort_reason.empty(),
               "reconstruct_eigenvector: flow aborted ("
                   << record.abort_reason << ")");
    RF_REQUIRE(basis.dim() > 0 && basis.state(0).empty(),
               "reconstruct_eigenvector: basis does not start at the vacuum");

    const int depth = record.steps.back().j;
    const cplx z = record.z_final;
    const Vec3 axis = reduction_axis(params);

    FlowChain chain(atom, params, grid, opts);
    std::vector<cplx> centers;
    centers.reserve(record.steps.size());
    for (const FlowStep& s : record.steps) centers.push_back(s.z);
    chain.set_centers(std::move(centers));
    std::vector<KernelFamily> fams;
    chain.family(z, depth, &fams, nullptr);

    const int nf = basis.dim();
    // Transport within the field block, deepest scale first: u starts as the
    // bare vacuum, and the scale-k operator maps the block below rho_k into
    // the block below rho_{k-1}.
    Eigen::VectorXcd u = Eigen::VectorXcd::Zero(nf);
    u(0) = 1.0;
    for (int k = depth; k >= 1; --k) {
        const KernelFamily& f = fams[static_cast<std::size_t>(k - 1)];
        const double rho_k = record.schedule.rho(k);
        const SparseC hm = evaluate_family(basis, f, axis);
        Eigen::VectorXcd t(nf);
        Eigen::VectorXd pd = Eigen::VectorXd::Zero(nf);
        Eigen::VectorXd pb = Eigen::VectorXd::Zero(nf);
        for (int s = 0; s < nf; ++s) {
            const double es = basis.energy(s);
            const LParPerp lp = split_l(basis.momentum(s), axis);
            t(s) = f.E + f.free(es, lp.par, lp.perp);
            if (es <= f.rho * kDomainSlack) {
                pd(s) = chi_rho(es, rho_k);
                pb(s) = std::sqrt(std::max(0.0, chibar_sq_rho(es, rho_k)));
            }
        }
        try {
            u = q_apply(hm, t, pd, pb, u);
        } catch (const std::exception& e) {
            RF_REQUIRE(false, "reconstruct_eigenvector: transport at scale "
                              "step "
                                  << k << " failed: " << e.what());
        }
    }

    Reconstruction out;
    {
        Eigen::VectorXcd omega = Eigen::VectorXcd::Zero(nf);
        omega(0) = 1.0;
        out.omega_distance = (u - omega).norm();
    }

    // Top-level transport into the product space: the projection couple is
    // the tracked level tensor the base-scale cutoff, its complement the
    // full remainder of the product basis.
    const int na = atom.n_levels();
    const int nprod = na * nf;
    const SparseC hfull = fiber_hamiltonian(atom, basis, params);
    SparseC ident(nprod, nprod);
    ident.setIdentity();
    const SparseC hz = hfull - z * ident;
    Eigen::VectorXcd tz = free_fiber_diag(atom, basis, params);
    tz.array() -= z;
    Eigen::VectorXd pd = Eigen::VectorXd::Zero(nprod);
    Eigen::VectorXd pb = Eigen::VectorXd::Ones(nprod);
    for (int s = 0; s < nf; ++s) {
        const int i = product_index(params.i0, s, nf);
        const double es = basis.energy(s);
        pd(i) = chi_rho(es, record.schedule.rho0);
        pb(i) = std::sqrt(
            std::max(0.0, chibar_sq_rho(es, record.schedule.rho0)));
    }
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(nprod);
    for (int s = 0; s < nf; ++s) v(product_index(params.i0, s, nf)) = u(s);
    Eigen::VectorXcd psi;
    try {
        psi = q_apply(hz, tz, pd, pb, v);
    } catch (const std::exception& e) {
        RF_REQUIRE(false, "reconstruct_eigenvector: transport at scale step 0 "
                          "failed: "
                              << e.what());
    }

    const double nrm = psi.norm();
    RF_REQUIRE(nrm > 0.0,
               "reconstruct_eigenvector: transported vector vanished");
    out.psi = psi;
    out.residual = (hfull * psi - z * psi).norm() / nrm;
    return out;
}

NondegeneracyReport nondegeneracy_check(const Eigen::VectorXcd& spectrum,
                                        const FlowRecord& record,
                                        double min_radius) {
    NondegeneracyReport rep;
    rep.radius = std::max(record.enclosure_radius, min_radius);
    for (Eigen::Index i = 0; i < spectrum.size(); ++i)
        if (std::abs(spectrum(i) - record.z_final) <= rep.radius)
            ++rep.count_in_disk;
    rep.unique = (rep.count_in_disk == 1);
    return rep;
}

}  // namespace resonflow
