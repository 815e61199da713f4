#include "resonflow/rewick.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "resonflow/threads.hpp"

namespace resonflow {

ContractionShifts pull_through_shifts(
    const ModeGrid& grid, const std::vector<FactorSlots>& factors,
    const std::vector<ContractionLine>& lines) {
    const int L = static_cast<int>(factors.size());
    ContractionShifts sh;
    sh.factor_r.assign(static_cast<std::size_t>(L), 0.0);
    sh.factor_l.assign(static_cast<std::size_t>(L), Vec3::Zero());
    sh.gap_r.assign(static_cast<std::size_t>(L) + 1, 0.0);
    sh.gap_l.assign(static_cast<std::size_t>(L) + 1, Vec3::Zero());

    auto mode_of = [&grid](int id) -> const PhotonMode& {
        return grid.modes[static_cast<std::size_t>(id)];
    };
    for (int j = 0; j < L; ++j) {
        for (const int id : factors[static_cast<std::size_t>(j)].ext_create) {
            const PhotonMode& mo = mode_of(id);
            for (int f = 0; f < j; ++f) {  // pulled left past factors before j
                sh.factor_r[static_cast<std::size_t>(f)] += mo.abs_k;
                sh.factor_l[static_cast<std::size_t>(f)] += mo.k;
            }
            for (int g = 0; g <= j; ++g) {
                sh.gap_r[static_cast<std::size_t>(g)] += mo.abs_k;
                sh.gap_l[static_cast<std::size_t>(g)] += mo.k;
            }
        }
        for (const int id : factors[static_cast<std::size_t>(j)].ext_annih) {
            const PhotonMode& mo = mode_of(id);
            for (int f = j + 1; f < L; ++f) {  // pulled right past later factors
                sh.factor_r[static_cast<std::size_t>(f)] += mo.abs_k;
                sh.factor_l[static_cast<std::size_t>(f)] += mo.k;
            }
            for (int g = j + 1; g <= L; ++g) {
                sh.gap_r[static_cast<std::size_t>(g)] += mo.abs_k;
                sh.gap_l[static_cast<std::size_t>(g)] += mo.k;
            }
        }
    }
    for (const ContractionLine& ln : lines) {
        RF_REQUIRE(0 <= ln.from && ln.from < ln.to && ln.to < L,
                   "pull_through_shifts: line (" << ln.from << "," << ln.to
                                                 << ") out of order");
        const PhotonMode& mo = mode_of(ln.mode);
        for (int f = ln.from + 1; f < ln.to; ++f) {
            sh.factor_r[static_cast<std::size_t>(f)] += mo.abs_k;
            sh.factor_l[static_cast<std::size_t>(f)] += mo.k;
        }
        for (int g = ln.from + 1; g <= ln.to; ++g) {
            sh.gap_r[static_cast<std::size_t>(g)] += mo.abs_k;
            sh.gap_l[static_cast<std::size_t>(g)] += mo.k;
        }
    }
    return sh;
}

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    return factorial(n) / (factorial(k) * factorial(n - k));
}

struct RwFactor {
    int M = 0, N = 0;  // input kernel order
    int m = 0, n = 0;  // external slots kept
    int p = 0, q = 0;  // internal slots: creations (p) contract leftward,
                       // annihilations (q) rightward
};

struct RwTerm {
    std::vector<RwFactor> f;
    std::vector<std::array<int, 2>> lines;  // (from, to), from < to
    double weight = 0;  // sign * C * M(c) * prod m! prod n! / (M! N!)
    int out_m = 0, out_n = 0;
};

// Structure-only record for the geometric mass bounds.
struct BoundEntry {
    int L = 0;
    int n_lines = 0;
    double base = 0;  // C * M(c) * prod of input half-norms
    bool dropped = false;
};

struct Enumeration {
    std::vector<RwTerm> stored;
    std::vector<BoundEntry> bounds;
};

// Enumerates line-multiplicity matrices c[i][j] (i < j) with row sums q_i
// and column sums p_j, recursing column by column.
void enum_line_matrices(const std::vector<RwFactor>& fs, int col,
                        std::vector<int>& q_left,
                        std::vector<std::vector<int>>& c,
                        const std::function<void()>& done) {
    const int L = static_cast<int>(fs.size());
    if (col == L) {
        done();
        return;
    }
    const int want = fs[static_cast<std::size_t>(col)].p;
    // Distribute `want` among rows 0..col-1 within remaining capacities.
    std::function<void(int, int)> rec = [&](int row, int left) {
        if (row == col) {
            if (left == 0)
                enum_line_matrices(fs, col + 1, q_left, c, done);
            return;
        }
        const int cap = std::min(left, q_left[static_cast<std::size_t>(row)]);
        for (int take = 0; take <= cap; ++take) {
            c[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] =
                take;
            q_left[static_cast<std::size_t>(row)] -= take;
            rec(row + 1, left - take);
            q_left[static_cast<std::size_t>(row)] += take;
            c[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] = 0;
        }
    };
    rec(0, want);
}

Enumeration enumerate_terms(const std::vector<std::pair<int, int>>& keys,
                            const std::map<std::pair<int, int>, double>& norms,
                            const RewickOptions& opt) {
    Enumeration out;
    if (keys.empty()) return out;

    std::vector<RwFactor> fs;
    std::function<void(int, int)> choose_factor = [&](int depth, int L) {
        if (depth == L) {
            // Internal slots must balance and satisfy the matching
            // feasibility condition (creations only contract leftward).
            int sp = 0, sq = 0;
            for (const RwFactor& f : fs) {
                sp += f.p;
                sq += f.q;
            }
            if (sp != sq) return;
            int cum_p = 0, cum_q = 0;
            for (int t = 0; t < L; ++t) {
                cum_p += fs[static_cast<std::size_t>(t)].p;
                if (cum_p > cum_q) return;  // needs an earlier annihilation
                cum_q += fs[static_cast<std::size_t>(t)].q;
            }
            std::vector<int> q_left(static_cast<std::size_t>(L));
            for (int i = 0; i < L; ++i)
                q_left[static_cast<std::size_t>(i)] =
                    fs[static_cast<std::size_t>(i)].q;
            std::vector<std::vector<int>> c(
                static_cast<std::size_t>(L),
                std::vector<int>(static_cast<std::size_t>(L), 0));
            enum_line_matrices(fs, 0, q_left, c, [&] {
                double mult = 1.0;  // M(c) = prod q_i! prod p_j! / prod c_ij!
                for (const RwFactor& f : fs)
                    mult *= factorial(f.q) * factorial(f.p);
                int n_lines = 0;
                for (int i = 0; i < L; ++i)
                    for (int j = i + 1; j < L; ++j) {
                        mult /= factorial(
                            c[static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(j)]);
                        n_lines += c[static_cast<std::size_t>(i)]
                                    [static_cast<std::size_t>(j)];
                    }
                double comb = 1.0;
                int out_m = 0, out_n = 0;
                for (const RwFactor& f : fs) {
                    comb *= binom(f.M, f.m) * binom(f.N, f.n);
                    out_m += f.m;
                    out_n += f.n;
                }
                const bool kept =
                    (out_m + out_n <= opt.m_max) && (L <= opt.l_max);
                double norm_prod = 1.0;
                for (const RwFactor& f : fs)
                    norm_prod *= norms.at({f.M, f.N});
                out.bounds.push_back(
                    {L, n_lines, comb * mult * norm_prod, !kept});
                if (!kept) return;

                RwTerm term;
                term.f = fs;
                term.out_m = out_m;
                term.out_n = out_n;
                double sym = 1.0;
                for (const RwFactor& f : fs)
                    sym *= factorial(f.m) * factorial(f.n);
                sym /= factorial(out_m) * factorial(out_n);
                term.weight = ((L % 2 == 1) ? 1.0 : -1.0) * comb * mult * sym;
                for (int i = 0; i < L; ++i)
                    for (int j = i + 1; j < L; ++j)
                        for (int rep = 0; rep < c[static_cast<std::size_t>(i)]
                                                  [static_cast<std::size_t>(j)];
                             ++rep)
                            term.lines.push_back({i, j});
                out.stored.push_back(std::move(term));
            });
            return;
        }
        for (const auto& key : keys)
            for (int m = 0; m <= key.first; ++m)
                for (int n = 0; n <= key.second; ++n) {
                    fs.push_back({key.first, key.second, m, n, key.first - m,
                                  key.second - n});
                    choose_factor(depth + 1, L);
                    fs.pop_back();
                }
    };
    // One extra depth beyond l_max feeds the series-tail estimate.
    for (int L = 1; L <= opt.l_max + 1; ++L) choose_factor(0, L);
    return out;
}

// All partitions of {0..total-1} into ordered groups of the given sizes;
// emits slot -> group maps in a stable order.
void enum_assignments(int total, const std::vector<int>& sizes,
                      const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> slot_group(static_cast<std::size_t>(total), -1);
    std::vector<int> left = sizes;
    std::function<void(int)> rec = [&](int slot) {
        if (slot == total) {
            fn(slot_group);
            return;
        }
        for (std::size_t g = 0; g < sizes.size(); ++g)
            if (left[g] > 0) {
                --left[g];
                slot_group[static_cast<std::size_t>(slot)] =
                    static_cast<int>(g);
                rec(slot + 1);
                slot_group[static_cast<std::size_t>(slot)] = -1;
                ++left[g];
            }
    };
    rec(0);
}

struct EvalCtx {
    const KernelFamily* fam = nullptr;
    const ModeGrid* grid = nullptr;
    const WickKernel* w00 = nullptr;  // may be null (treated as 0)
    double rho_old = 0, rho_new = 0;
    Vec3 axis, eperp;
    double margin = 0;
    std::vector<int> line_modes;  // internal contraction mode ids (old scale)
    std::atomic<long> evals{0};
    std::atomic<double> min_den{std::numeric_limits<double>::infinity()};

    const WickKernel& kernel(int M, int N) const {
        const WickKernel* k = fam->find(M, N);
        RF_REQUIRE(k, "rewick: missing input kernel (" << M << "," << N << ")");
        return *k;
    }
    void track_den(double d) {
        double cur = min_den.load(std::memory_order_relaxed);
        while (d < cur &&
               !min_den.compare_exchange_weak(cur, d, std::memory_order_relaxed)) {
        }
    }
};

void eval_leaf(EvalCtx& ctx, const RwTerm& term,
               const std::vector<FactorSlots>& fslots,
               const std::vector<ContractionLine>& lines, double weight,
               const LGrid& out_grid, std::vector<cplx>& acc);

// Evaluates every term contribution for a fixed external-slot mode tuple,
// accumulating into acc (one slot per (r,u,v) grid point).
void eval_tuple(EvalCtx& ctx, const std::vector<const RwTerm*>& terms,
                const LGrid& out_grid, const std::vector<int>& ext_create,
                const std::vector<int>& ext_annih, std::vector<cplx>& acc) {
    const ModeGrid& grid = *ctx.grid;
    // A tuple whose pulled-out slots already exceed the new scale cannot
    // pass the outer cutoffs at any grid point.
    double sum_cre = 0, sum_ann = 0;
    for (const int id : ext_create)
        sum_cre += grid.modes[static_cast<std::size_t>(id)].abs_k;
    for (const int id : ext_annih)
        sum_ann += grid.modes[static_cast<std::size_t>(id)].abs_k;
    if (sum_cre >= ctx.rho_new || sum_ann >= ctx.rho_new) return;

    for (const RwTerm* term_ptr : terms) {
        const RwTerm& term = *term_ptr;
        const int L = static_cast<int>(term.f.size());
        const int n_lines = static_cast<int>(term.lines.size());
        std::vector<int> sizes_m, sizes_n;
        for (const RwFactor& f : term.f) {
            sizes_m.push_back(f.m);
            sizes_n.push_back(f.n);
        }
        enum_assignments(
            term.out_m, sizes_m, [&](const std::vector<int>& cre_map) {
                enum_assignments(term.out_n, sizes_n, [&](const std::vector<int>&
                                                              ann_map) {
                    std::vector<FactorSlots> fslots(
                        static_cast<std::size_t>(L));
                    for (int s = 0; s < term.out_m; ++s)
                        fslots[static_cast<std::size_t>(
                                   cre_map[static_cast<std::size_t>(s)])]
                            .ext_create.push_back(
                                ext_create[static_cast<std::size_t>(s)]);
                    for (int s = 0; s < term.out_n; ++s)
                        fslots[static_cast<std::size_t>(
                                   ann_map[static_cast<std::size_t>(s)])]
                            .ext_annih.push_back(
                                ext_annih[static_cast<std::size_t>(s)]);

                    std::vector<ContractionLine> lines(
                        static_cast<std::size_t>(n_lines));
                    for (int i = 0; i < n_lines; ++i)
                        lines[static_cast<std::size_t>(i)] = {
                            term.lines[static_cast<std::size_t>(i)][0],
                            term.lines[static_cast<std::size_t>(i)][1], 0};

                    // Recursive sum over internal line modes with pruning on
                    // the inner-gap field energies (old-scale indicators).
                    std::vector<double> gap_part(
                        static_cast<std::size_t>(L) + 1, 0.0);
                    {
                        const ContractionShifts base = pull_through_shifts(
                            grid, fslots, {});
                        for (int g = 0; g <= L; ++g)
                            gap_part[static_cast<std::size_t>(g)] =
                                base.gap_r[static_cast<std::size_t>(g)];
                    }

                    std::function<void(int, double)> rec = [&](int li,
                                                               double wline) {
                        if (li == n_lines) {
                            eval_leaf(ctx, term, fslots, lines, wline,
                                      out_grid, acc);
                            return;
                        }
                        const auto [lf, lt] =
                            std::pair(term.lines[static_cast<std::size_t>(li)]
                                               [0],
                                      term.lines[static_cast<std::size_t>(li)]
                                               [1]);
                        for (const int mode : ctx.line_modes) {
                            const PhotonMode& mo =
                                grid.modes[static_cast<std::size_t>(mode)];
                            for (int g = lf + 1; g <= lt; ++g)
                                gap_part[static_cast<std::size_t>(g)] +=
                                    mo.abs_k;
                            bool ok = true;
                            for (int g = lf + 1; g <= lt && ok; ++g)
                                if (g < L &&
                                    gap_part[static_cast<std::size_t>(g)] >
                                        ctx.rho_old * (1 + 1e-12))
                                    ok = false;
                            if (ok) {
                                lines[static_cast<std::size_t>(li)].mode =
                                    mode;
                                rec(li + 1, wline * mo.weight);
                            }
                            for (int g = lf + 1; g <= lt; ++g)
                                gap_part[static_cast<std::size_t>(g)] -=
                                    mo.abs_k;
                        }
                    };
                    rec(0, term.weight);
                });
            });
    }
}

void eval_leaf(EvalCtx& ctx, const RwTerm& term,
               const std::vector<FactorSlots>& fslots,
               const std::vector<ContractionLine>& lines, double weight,
               const LGrid& out_grid, std::vector<cplx>& acc) {
    const ModeGrid& grid = *ctx.grid;
    const int L = static_cast<int>(term.f.size());
    const ContractionShifts sh = pull_through_shifts(grid, fslots, lines);

    if (sh.gap_r[0] >= ctx.rho_new ||
        sh.gap_r[static_cast<std::size_t>(L)] >= ctx.rho_new)
        return;  // outer cutoff vanishes for every r >= 0

    // Factor kernels and their K-tuple indices (externals then lines).
    std::vector<const WickKernel*> fk(static_cast<std::size_t>(L));
    std::vector<long> kflat(static_cast<std::size_t>(L), 0);
    for (int f = 0; f < L; ++f) {
        const RwFactor& rf = term.f[static_cast<std::size_t>(f)];
        const WickKernel& k = ctx.kernel(rf.M, rf.N);
        fk[static_cast<std::size_t>(f)] = &k;
        long flat = 0;
        auto push = [&](int mode) {
            const int digit = k.slot_of(mode);
            RF_REQUIRE(digit >= 0, "rewick: mode " << mode
                                                   << " missing from kernel ("
                                                   << rf.M << "," << rf.N
                                                   << ")");
            flat = flat * k.k_dim() + digit;
        };
        for (const int mode : fslots[static_cast<std::size_t>(f)].ext_create)
            push(mode);
        for (const ContractionLine& ln : lines)
            if (ln.to == f) push(ln.mode);
        for (const int mode : fslots[static_cast<std::size_t>(f)].ext_annih)
            push(mode);
        for (const ContractionLine& ln : lines)
            if (ln.from == f) push(ln.mode);
        kflat[static_cast<std::size_t>(f)] = flat;
    }

    // Largest output r still compatible with the outer cutoffs and the
    // old-scale indicators at the inner gaps.
    double r_cap = ctx.rho_new -
                   std::max(sh.gap_r[0], sh.gap_r[static_cast<std::size_t>(L)]);
    for (int g = 1; g < L; ++g)
        r_cap = std::min(r_cap, ctx.rho_old * (1 + 1e-12) -
                                    sh.gap_r[static_cast<std::size_t>(g)]);
    if (r_cap < 0) return;

    ctx.evals.fetch_add(1, std::memory_order_relaxed);
    for (int ir = 0; ir < out_grid.n_r(); ++ir) {
        const double r_pt = out_grid.r(ir);
        if (r_pt > r_cap) break;  // radial nodes ascend
        for (int iu = 0; iu < out_grid.n_u(); ++iu) {
            const double lpar_pt = out_grid.l_par(ir, iu);
            for (int iv = 0; iv < out_grid.n_v(); ++iv) {
                const double lperp_pt = out_grid.l_perp(ir, iu, iv);
                const Vec3 l_pt = lpar_pt * ctx.axis + lperp_pt * ctx.eperp;

                cplx prod(weight, 0);
                // The universal outer compression chi(r+gap0)*chi(r+gapL) is
                // restored analytically at every evaluation (see
                // WickKernel::outer_chi), so only the smooth core is
                // accumulated here.

                bool dead = false;
                for (int g = 1; g < L && !dead; ++g) {
                    const double arg =
                        r_pt + sh.gap_r[static_cast<std::size_t>(g)];
                    const double cb2 = chibar_sq_rho(arg, ctx.rho_new);
                    if (cb2 == 0.0) {
                        dead = true;
                        break;
                    }
                    const Vec3 lv =
                        l_pt + sh.gap_l[static_cast<std::size_t>(g)];
                    const LParPerp lp = split_l(lv, ctx.axis);
                    cplx denom =
                        ctx.fam->E + ctx.fam->free(arg, lp.par, lp.perp);
                    if (ctx.w00)
                        denom +=
                            eval_kernel_flat(*ctx.w00, arg, lp.par, lp.perp, 0);
                    const double ad = std::abs(denom);
                    ctx.track_den(ad);
                    RF_REQUIRE(
                        ctx.margin <= 0 || ad >= ctx.margin,
                        "rewick: resolvent denominator |"
                            << denom << "| = " << ad << " below margin "
                            << ctx.margin << " at gap " << g << ", field energy "
                            << arg << " (r grid point " << r_pt << ")");
                    prod *= cb2 / denom;
                }
                if (dead) continue;

                for (int f = 0; f < L && !dead; ++f) {
                    const Vec3 lv =
                        l_pt + sh.factor_l[static_cast<std::size_t>(f)];
                    const LParPerp lp = split_l(lv, ctx.axis);
                    const cplx val = eval_kernel_flat(
                        *fk[static_cast<std::size_t>(f)],
                        r_pt + sh.factor_r[static_cast<std::size_t>(f)], lp.par,
                        lp.perp, kflat[static_cast<std::size_t>(f)]);
                    if (val == cplx(0, 0)) {
                        dead = true;
                        break;
                    }
                    prod *= val;
                }
                if (!dead)
                    acc[static_cast<std::size_t>(out_grid.flat(ir, iu, iv))] +=
                        prod;
            }
        }
    }
}

Vec3 perp_unit(const Vec3& axis) {
    Vec3 cand = Vec3::UnitZ() - Vec3::UnitZ().dot(axis) * axis;
    if (cand.norm() < 1e-9)
        cand = Vec3::UnitX() - Vec3::UnitX().dot(axis) * axis;
    return cand.normalized();
}

}  // namespace

KernelFamily rewick(const KernelFamily& fam, const ModeGrid& grid,
                    double rho_new, const Vec3& axis, const RewickOptions& opt,
                    RewickReport* report) {
    RF_REQUIRE(rho_new > 0 && rho_new < fam.rho,
               "rewick: new scale " << rho_new
                                    << " must lie in (0, " << fam.rho << ")");
    RF_REQUIRE(opt.l_max >= 1 && opt.m_max >= 0,
               "rewick: invalid truncation orders");
    RF_REQUIRE(std::abs(axis.norm() - 1.0) < 1e-12,
               "rewick: axis must be a unit vector");

    EvalCtx ctx;
    ctx.fam = &fam;
    ctx.grid = &grid;
    ctx.w00 = fam.find(0, 0);
    ctx.rho_old = fam.rho;
    ctx.rho_new = rho_new;
    ctx.axis = axis;
    ctx.eperp = perp_unit(axis);
    ctx.margin = opt.margin;

    std::vector<std::pair<int, int>> keys;
    std::map<std::pair<int, int>, double> norms;
    for (const auto& [key, k] : fam.kernels)
        if (key.first + key.second >= 1) {
            keys.push_back(key);
            norms[key] = half_norm(k, grid);
            if (ctx.line_modes.empty()) ctx.line_modes = k.modes;
        }

    const Enumeration en = enumerate_terms(keys, norms, opt);

    // Group stored terms by output order.
    std::map<std::pair<int, int>, std::vector<const RwTerm*>> by_output;
    for (const RwTerm& t : en.stored) by_output[{t.out_m, t.out_n}].push_back(&t);

    const LGrid new_grid = make_lgrid(rho_new, opt.n_r, opt.n_u, opt.n_v);
    KernelFamily out;
    out.rho = rho_new;
    out.E = fam.E;
    // The analytic free polynomial survives decimation unchanged (the
    // compression acts as the identity on it below the new scale), so it is
    // copied exactly rather than resampled.
    out.free = fam.free;

    // (0,0): passthrough of the sampled correction, resampled, plus bubbles.
    // The passthrough is the *evaluated* old kernel (its own compression
    // weight included, though that weight is identically 1 below the new
    // scale); the stored result is again a compression-flagged core, and E
    // passes through untouched — the vacuum value of the family is read off
    // as E + free(0) + w00(0).
    {
        WickKernel w00_new = make_kernel(0, 0, new_grid, grid);
        w00_new.outer_chi = true;
        std::vector<cplx> bubbles(
            static_cast<std::size_t>(new_grid.n_points()), cplx(0, 0));
        const auto bubble_terms = by_output.find({0, 0});
        if (bubble_terms != by_output.end()) {
            // Bubbles share one accumulation buffer; each leaf touches every
            // grid point, so parallelism is over nothing here (terms are few
            // and the line sums dominate) — run serially for determinism.
            eval_tuple(ctx, bubble_terms->second, new_grid, {}, {}, bubbles);
        }
        for (int pt = 0; pt < new_grid.n_points(); ++pt) {
            const int ir = pt / (new_grid.n_u() * new_grid.n_v());
            const int rem = pt % (new_grid.n_u() * new_grid.n_v());
            const int iu = rem / new_grid.n_v();
            const int iv = rem % new_grid.n_v();
            cplx passthrough(0, 0);
            if (ctx.w00)
                passthrough = eval_kernel_flat(
                    *ctx.w00, new_grid.r(ir), new_grid.l_par(ir, iu),
                    new_grid.l_perp(ir, iu, iv), 0);
            w00_new.samples(w00_new.sample_index(pt, 0)) =
                passthrough + bubbles[static_cast<std::size_t>(pt)];
        }
        out.kernels.emplace(std::make_pair(0, 0), std::move(w00_new));
    }

    // Higher outputs: parallel over external mode tuples. With no photon
    // modes below the new scale the m+n >= 1 monomials act as zero on the
    // retained block and are omitted entirely.
    const bool have_modes = !grid.modes_below(rho_new * (1 + 1e-12)).empty();
    for (const auto& [key, terms] : by_output) {
        if (key.first + key.second == 0 || !have_modes) continue;
        WickKernel k_out = make_kernel(key.first, key.second, new_grid, grid);
        k_out.outer_chi = true;
        const long tuples = k_out.k_tuples();
        const int kd = k_out.k_dim();
        if (kd == 0) continue;
        WickKernel* dst = &k_out;
        const std::vector<const RwTerm*>* tptr = &terms;
        parallel_for(tuples, [&ctx, dst, tptr, kd, key, &new_grid](long t) {
            std::vector<int> cre(static_cast<std::size_t>(key.first));
            std::vector<int> ann(static_cast<std::size_t>(key.second));
            long rem = t;
            for (int d = key.first + key.second - 1; d >= 0; --d) {
                const int mode =
                    dst->modes[static_cast<std::size_t>(rem % kd)];
                rem /= kd;
                if (d < key.first)
                    cre[static_cast<std::size_t>(d)] = mode;
                else
                    ann[static_cast<std::size_t>(d - key.first)] = mode;
            }
            std::vector<cplx> acc(
                static_cast<std::size_t>(new_grid.n_points()), cplx(0, 0));
            eval_tuple(ctx, *tptr, new_grid, cre, ann, acc);
            for (int pt = 0; pt < new_grid.n_points(); ++pt)
                dst->samples(dst->sample_index(pt, t)) =
                    acc[static_cast<std::size_t>(pt)];
        });
        symmetrize(k_out, grid);
        out.kernels.emplace(key, std::move(k_out));
    }

    if (report) {
        report->min_denominator = ctx.min_den.load();
        report->terms_evaluated = ctx.evals.load();
        for (const auto& [key, k] : out.kernels)
            report->half_norms[key] = half_norm(k, grid);

        double d_const = 0;
        for (const int mode : ctx.line_modes)
            d_const += grid.modes[static_cast<std::size_t>(mode)].weight *
                       grid.modes[static_cast<std::size_t>(mode)].abs_k;
        const double rb =
            opt.margin > 0
                ? 1.0 / opt.margin
                : (std::isfinite(report->min_denominator) &&
                           report->min_denominator > 0
                       ? 1.0 / report->min_denominator
                       : std::numeric_limits<double>::infinity());
        double dropped = 0;
        std::vector<double> per_l(static_cast<std::size_t>(opt.l_max) + 2, 0.0);
        for (const BoundEntry& b : en.bounds) {
            const double val = b.base * std::pow(d_const, b.n_lines) *
                               std::pow(rb, b.L - 1);
            if (b.dropped && b.L <= opt.l_max) dropped += val;
            per_l[static_cast<std::size_t>(b.L)] += val;
        }
        report->dropped_mass_bound = dropped;
        const double s_last = per_l[static_cast<std::size_t>(opt.l_max)];
        const double s_next = per_l[static_cast<std::size_t>(opt.l_max) + 1];
        if (s_next == 0.0)
            report->tail_bound = 0.0;
        else if (s_last > 0 && s_next < s_last)
            report->tail_bound = s_next / (1.0 - s_next / s_last);
        else
            report->tail_bound = std::numeric_limits<double>::infinity();
    }
    check_family(out);
    return out;
}

}  // namespace resonflow
