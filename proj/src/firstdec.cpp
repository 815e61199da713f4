#include "resonflow/firstdec.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "resonflow/hamiltonian.hpp"
#include "resonflow/linalg.hpp"
#include "resonflow/rewick.hpp"
#include "resonflow/threads.hpp"

namespace resonflow {

namespace {

double factorial(int x) {
    double f = 1;
    for (int i = 2; i <= x; ++i) f *= i;
    return f;
}

// One interaction vertex in a Neumann-order product: creation or
// annihilation, contracted (internal line endpoint) or external (output
// kernel slot).
struct FdFactor {
    bool cre = false;
    bool ext = false;
};

// A fully specified contraction pattern of one interaction order: the
// vertex kinds, the matching of internal endpoints into lines (from = the
// annihilation end, which always precedes the creation end), and the
// symmetrization weight of the external slots.
struct FdTerm {
    std::vector<FdFactor> f;
    std::vector<std::array<int, 2>> pairs;
    int out_m = 0;
    int out_n = 0;
    double weight = 0;  // (-1)^{L+1} / (out_m! out_n!); lambda0^L at eval
};

struct FdDropped {
    int L = 0;
    int n_lines = 0;
    double base = 0;  // product of per-factor half norms / slot factorials
};

struct FdEnum {
    std::vector<FdTerm> stored;
    std::vector<FdDropped> dropped;
};

// Enumerates the matchings of internal endpoints: scanning left to right,
// every internal creation closes one currently open internal annihilation.
void enum_matchings(const std::vector<FdFactor>& kinds, int pos,
                    std::vector<int>& open,
                    std::vector<std::array<int, 2>>& pairs,
                    const std::function<void()>& done) {
    const int L = static_cast<int>(kinds.size());
    if (pos == L) {
        if (open.empty()) done();
        return;
    }
    const FdFactor& fk = kinds[static_cast<std::size_t>(pos)];
    if (fk.ext) {
        enum_matchings(kinds, pos + 1, open, pairs, done);
        return;
    }
    if (!fk.cre) {
        open.push_back(pos);
        enum_matchings(kinds, pos + 1, open, pairs, done);
        open.pop_back();
        return;
    }
    for (std::size_t i = 0; i < open.size(); ++i) {
        const int from = open[i];
        pairs.push_back({from, pos});
        open.erase(open.begin() + static_cast<long>(i));
        enum_matchings(kinds, pos + 1, open, pairs, done);
        open.insert(open.begin() + static_cast<long>(i), from);
        pairs.pop_back();
    }
}

// Enumerates vertex-kind sequences of every order L <= l_max with a running
// feasibility count of open internal annihilations, then expands each into
// its matchings. hn_vertex is the per-factor half-norm bound entering the
// dropped-mass bookkeeping.
FdEnum enumerate_terms(int l_max, int m_max, double hn_vertex) {
    FdEnum out;
    std::vector<FdFactor> cur;
    std::function<void(int, int, int)> rec = [&](int L, int pos, int pool) {
        if (pool > L - pos) return;  // open lines can no longer close
        if (pos == L) {
            if (pool != 0) return;
            int out_m = 0, out_n = 0;
            for (const FdFactor& fk : cur) {
                if (fk.ext && fk.cre) ++out_m;
                if (fk.ext && !fk.cre) ++out_n;
            }
            const double sign = (L % 2 == 1) ? 1.0 : -1.0;
            const double sym = factorial(out_m) * factorial(out_n);
            std::vector<int> open;
            std::vector<std::array<int, 2>> pairs;
            enum_matchings(cur, 0, open, pairs, [&] {
                if (out_m + out_n <= m_max) {
                    FdTerm t;
                    t.f = cur;
                    t.pairs = pairs;
                    t.out_m = out_m;
                    t.out_n = out_n;
                    t.weight = sign / sym;
                    out.stored.push_back(std::move(t));
                } else {
                    // The m! n! slot assignments carry total weight 1 (each
                    // is weighted 1/sym), so one vertex-norm product bounds
                    // the whole symmetrized sum.
                    out.dropped.push_back({L, static_cast<int>(pairs.size()),
                                           std::pow(hn_vertex, L)});
                }
            });
            return;
        }
        for (const bool cre : {false, true})
            for (const bool ext : {true, false}) {
                if (cre && !ext && pool == 0) continue;
                cur.push_back({cre, ext});
                rec(L, pos + 1, pool + (!cre && !ext ? 1 : 0) -
                                    (cre && !ext ? 1 : 0));
                cur.pop_back();
            }
    };
    for (int L = 1; L <= l_max; ++L) rec(L, 0, 0);
    return out;
}

struct FdCtx {
    const AtomSpec* atom = nullptr;
    const ModeGrid* grid = nullptr;
    cplx z{0, 0};
    double rho0 = 0;
    double lambda0 = 0;
    Vec3 axis = Vec3::UnitZ();
    Vec3 eperp = Vec3::UnitX();
    Vec3c p = Vec3c::Zero();
    cplx emt{1, 0}, emt2{1, 0};
    int i0 = 0;
    int nlev = 0;
    double margin = 0;
    std::vector<Eigen::MatrixXcd> dmat;  // eps_x . d per mode id
    std::vector<cplx> gvert;             // vertex coupling per mode id
    std::vector<int> line_modes;
    mutable std::atomic<double> min_den{
        std::numeric_limits<double>::infinity()};
    mutable std::atomic<long> evals{0};

    void track_den(double v) const {
        double cur = min_den.load(std::memory_order_relaxed);
        while (v < cur &&
               !min_den.compare_exchange_weak(cur, v,
                                              std::memory_order_relaxed)) {
        }
    }
};

// Evaluates one fully assigned contraction pattern on every output grid
// point at or below the support cap, accumulating into acc (length
// n_points) and its absolute mass into *mass.
void fd_leaf(const FdCtx& ctx, const FdTerm& t, const std::vector<int>& fmode,
             const std::vector<ContractionLine>& lines, double wline,
             const LGrid& og, cplx* acc, double* mass) {
    const int L = static_cast<int>(t.f.size());
    std::vector<FactorSlots> fs(static_cast<std::size_t>(L));
    for (int f = 0; f < L; ++f) {
        const FdFactor& fk = t.f[static_cast<std::size_t>(f)];
        if (!fk.ext) continue;
        auto& dstv = fk.cre ? fs[static_cast<std::size_t>(f)].ext_create
                            : fs[static_cast<std::size_t>(f)].ext_annih;
        dstv.push_back(fmode[static_cast<std::size_t>(f)]);
    }
    const ContractionShifts sh = pull_through_shifts(*ctx.grid, fs, lines);
    const double cap =
        ctx.rho0 - std::max(sh.gap_r[0], sh.gap_r[static_cast<std::size_t>(L)]);
    if (cap < 0) return;

    cplx scal(t.weight * wline, 0);
    for (int f = 0; f < L; ++f) {
        const cplx g =
            ctx.gvert[static_cast<std::size_t>(fmode[static_cast<std::size_t>(f)])];
        scal *= t.f[static_cast<std::size_t>(f)].cre ? -ctx.lambda0 * g
                                                     : ctx.lambda0 * g;
    }
    ctx.evals.fetch_add(1, std::memory_order_relaxed);

    std::vector<cplx> v(static_cast<std::size_t>(ctx.nlev));
    std::vector<cplx> vn(static_cast<std::size_t>(ctx.nlev));
    for (int ir = 0; ir < og.n_r(); ++ir) {
        const double r_pt = og.r(ir);
        if (r_pt > cap) break;  // radial nodes ascend
        for (int iu = 0; iu < og.n_u(); ++iu) {
            const double lpar = og.l_par(ir, iu);
            for (int iv = 0; iv < og.n_v(); ++iv) {
                const double lperp = og.l_perp(ir, iu, iv);
                const Vec3 l_pt = lpar * ctx.axis + lperp * ctx.eperp;

                std::fill(v.begin(), v.end(), cplx(0, 0));
                v[static_cast<std::size_t>(ctx.i0)] = cplx(1, 0);
                for (int f = 0; f < L; ++f) {
                    const Eigen::MatrixXcd& dm = ctx.dmat[static_cast<std::size_t>(
                        fmode[static_cast<std::size_t>(f)])];
                    for (int b = 0; b < ctx.nlev; ++b) {
                        cplx s(0, 0);
                        for (int a = 0; a < ctx.nlev; ++a)
                            s += v[static_cast<std::size_t>(a)] * dm(a, b);
                        vn[static_cast<std::size_t>(b)] = s;
                    }
                    v.swap(vn);
                    if (f + 1 >= L) continue;
                    const std::size_t g = static_cast<std::size_t>(f + 1);
                    const double ar = r_pt + sh.gap_r[g];
                    const Vec3 lv = l_pt + sh.gap_l[g];
                    const cplx c0 = ctx.emt2 * (0.5 * lv.squaredNorm()) +
                                    ctx.emt * ar - ctx.emt * cdot(ctx.p, lv) -
                                    ctx.z;
                    for (int j = 0; j < ctx.nlev; ++j) {
                        const cplx bj = c0 + ctx.atom->energies(j);
                        if (j == ctx.i0) {
                            const double cb2 = chibar_sq_rho(ar, ctx.rho0);
                            if (cb2 == 0.0) {
                                v[static_cast<std::size_t>(j)] = cplx(0, 0);
                                continue;
                            }
                            v[static_cast<std::size_t>(j)] *= cb2;
                        }
                        const double ad = std::abs(bj);
                        ctx.track_den(ad);
                        RF_REQUIRE(ctx.margin <= 0 || ad >= ctx.margin,
                                   "first_decimation: resolvent entry |b_"
                                       << j << "| = " << ad << " below margin "
                                       << ctx.margin << " at gap " << f + 1
                                       << ", field energy " << ar
                                       << " (r grid point " << r_pt << ")");
                        v[static_cast<std::size_t>(j)] /= bj;
                    }
                }
                const cplx contrib =
                    scal * v[static_cast<std::size_t>(ctx.i0)];
                acc[og.flat(ir, iu, iv)] += contrib;
                *mass += std::abs(contrib);
            }
        }
    }
}

// Evaluates every stored term of one output order at a fixed external mode
// tuple: external slots are distributed over the ext positions in every
// order (the 1/(m! n!) weight turns the sum into the symmetrized average),
// and internal lines sweep the admitted line modes with their quadrature
// weights. massL accumulates per-order absolute mass (index = order).
void fd_tuple(const FdCtx& ctx, const std::vector<const FdTerm*>& terms,
              const LGrid& og, const std::vector<int>& cre,
              const std::vector<int>& ann, std::vector<cplx>& acc,
              std::vector<double>& massL) {
    double sum_c = 0, sum_a = 0;
    for (const int mode : cre)
        sum_c += ctx.grid->modes[static_cast<std::size_t>(mode)].abs_k;
    for (const int mode : ann)
        sum_a += ctx.grid->modes[static_cast<std::size_t>(mode)].abs_k;
    if (sum_c >= ctx.rho0 || sum_a >= ctx.rho0) return;  // outside support

    for (const FdTerm* t : terms) {
        const int L = static_cast<int>(t->f.size());
        std::vector<int> cpos, apos;
        for (int f = 0; f < L; ++f) {
            const FdFactor& fk = t->f[static_cast<std::size_t>(f)];
            if (fk.ext && fk.cre) cpos.push_back(f);
            if (fk.ext && !fk.cre) apos.push_back(f);
        }
        std::vector<int> cperm(cre.size()), aperm(ann.size());
        std::vector<int> fmode(static_cast<std::size_t>(L), -1);
        std::iota(cperm.begin(), cperm.end(), 0);
        do {
            std::iota(aperm.begin(), aperm.end(), 0);
            do {
                for (std::size_t i = 0; i < cpos.size(); ++i)
                    fmode[static_cast<std::size_t>(cpos[i])] =
                        cre[static_cast<std::size_t>(cperm[i])];
                for (std::size_t i = 0; i < apos.size(); ++i)
                    fmode[static_cast<std::size_t>(apos[i])] =
                        ann[static_cast<std::size_t>(aperm[i])];

                std::vector<ContractionLine> lines(t->pairs.size());
                std::function<void(std::size_t, double)> rec =
                    [&](std::size_t li, double wline) {
                        if (li == t->pairs.size()) {
                            fd_leaf(ctx, *t, fmode, lines, wline, og,
                                    acc.data(),
                                    &massL[static_cast<std::size_t>(L)]);
                            return;
                        }
                        const auto [from, to] = t->pairs[li];
                        for (const int x : ctx.line_modes) {
                            lines[li] = {from, to, x};
                            fmode[static_cast<std::size_t>(from)] = x;
                            fmode[static_cast<std::size_t>(to)] = x;
                            rec(li + 1,
                                wline *
                                    ctx.grid->modes[static_cast<std::size_t>(x)]
                                        .weight);
                        }
                    };
                rec(0, 1.0);
            } while (std::next_permutation(aperm.begin(), aperm.end()));
        } while (std::next_permutation(cperm.begin(), cperm.end()));
    }
}

Vec3 perp_unit(const Vec3& axis) {
    Vec3 cand = Vec3::UnitZ() - Vec3::UnitZ().dot(axis) * axis;
    if (cand.norm() < 1e-9)
        cand = Vec3::UnitX() - Vec3::UnitX().dot(axis) * axis;
    return cand.normalized();
}

}  // namespace

KernelFamily first_decimation(const AtomSpec& atom, const ProblemParams& params,
                              const ModeGrid& grid, cplx z,
                              const FirstDecOptions& opt,
                              FirstDecReport* report) {
    RF_REQUIRE(params.vartheta > 0,
               "first_decimation: dilation angle must be positive");
    RF_REQUIRE(opt.l_max >= 1 && opt.m_max >= 0,
               "first_decimation: invalid truncation orders");
    domain_check(params);
    const cplx e_i0 = cplx(atom.energies(params.i0), 0);
    const double r0 =
        params.mu * std::sin(params.vartheta) * params.rho0 / 32.0;
    RF_REQUIRE(std::abs(z - e_i0) <= r0 * (1.0 + 1e-9),
               "first_decimation: z = " << z << " outside the spectral disk D("
                                        << e_i0 << ", " << r0 << ")");

    FdCtx ctx;
    ctx.atom = &atom;
    ctx.grid = &grid;
    ctx.z = z;
    ctx.rho0 = params.rho0;
    ctx.lambda0 = params.lambda0;
    ctx.p = params.p;
    ctx.emt = params.emt();
    ctx.emt2 = params.emt2();
    ctx.i0 = params.i0;
    ctx.nlev = atom.n_levels();
    ctx.margin = opt.margin;
    ctx.axis = reduction_axis(params);
    ctx.eperp = perp_unit(ctx.axis);
    {
        // The momentum reduction about the axis requires p parallel to it.
        const cplx ppar = cdot(Vec3c(ctx.axis.cast<cplx>()), params.p);
        const double resid = (params.p - ppar * ctx.axis.cast<cplx>()).norm();
        RF_REQUIRE(resid <= 1e-10 * (1.0 + params.p.norm()),
                   "first_decimation: p must be parallel to the reduction axis"
                   " p*, transverse residual "
                       << resid);
    }

    ctx.dmat.resize(static_cast<std::size_t>(grid.n_modes()));
    ctx.gvert.resize(static_cast<std::size_t>(grid.n_modes()));
    for (int x = 0; x < grid.n_modes(); ++x) {
        const PhotonMode& mode = grid.modes[static_cast<std::size_t>(x)];
        Eigen::MatrixXcd dm(ctx.nlev, ctx.nlev);
        for (int a = 0; a < ctx.nlev; ++a)
            for (int b = 0; b < ctx.nlev; ++b)
                dm(a, b) = atom.dipole_element(mode.eps, a, b);
        ctx.dmat[static_cast<std::size_t>(x)] = std::move(dm);
        ctx.gvert[static_cast<std::size_t>(x)] =
            vertex_coupling(mode.abs_k, grid.spec.uv_sigma, params.theta());
    }
    ctx.line_modes = grid.modes_below(opt.line_e_max);
    RF_REQUIRE(!ctx.line_modes.empty(),
               "first_decimation: no photon modes below line_e_max = "
                   << opt.line_e_max);

    // Per-factor half-norm bound sup |g(k)| ||eps.d|| / sqrt|k| over modes.
    double hn_vertex = 0;
    for (const int x : ctx.line_modes) {
        const PhotonMode& mode = grid.modes[static_cast<std::size_t>(x)];
        hn_vertex =
            std::max(hn_vertex,
                     params.lambda0 *
                         std::abs(ctx.gvert[static_cast<std::size_t>(x)]) *
                         operator_norm(DenseC(
                             ctx.dmat[static_cast<std::size_t>(x)])) /
                         std::sqrt(mode.abs_k));
    }

    const LGrid og = make_lgrid(params.rho0, opt.n_r, opt.n_u, opt.n_v);
    KernelFamily out;
    out.rho = params.rho0;
    out.E = e_i0 - z;

    std::map<std::pair<int, int>, std::vector<const FdTerm*>> by_output;
    FdEnum en;
    if (params.lambda0 > 0) {
        en = enumerate_terms(opt.l_max, opt.m_max, hn_vertex);
        for (const FdTerm& t : en.stored)
            by_output[{t.out_m, t.out_n}].push_back(&t);
    }

    std::vector<double> massL(static_cast<std::size_t>(opt.l_max) + 1, 0.0);

    // (0,0): the solvable part e^{-theta}(r - p.l) + e^{-2 theta} l^2/2
    // passes through exactly and is kept as the analytic free polynomial
    // (its quadratic momentum dependence would otherwise be mangled by the
    // coarse sample grid). Fully contracted patterns land in the samples,
    // under the same analytic compression chi_rho(r)^2 as the slotted
    // outputs; E stays the solvable constant E_{i0} - z.
    out.free.a_r = ctx.emt;
    out.free.a_par = -ctx.emt * cdot(ctx.p, ctx.axis);
    out.free.a_perp = -ctx.emt * cdot(ctx.p, ctx.eperp);
    out.free.a_l2 = 0.5 * ctx.emt2;
    {
        WickKernel w00 = make_kernel(0, 0, og, grid);
        w00.outer_chi = true;
        std::vector<cplx> bubbles(static_cast<std::size_t>(og.n_points()),
                                  cplx(0, 0));
        const auto it = by_output.find({0, 0});
        if (it != by_output.end())
            fd_tuple(ctx, it->second, og, {}, {}, bubbles, massL);
        for (int pt = 0; pt < og.n_points(); ++pt)
            w00.samples(w00.sample_index(pt, 0)) =
                bubbles[static_cast<std::size_t>(pt)];
        out.kernels.emplace(std::make_pair(0, 0), std::move(w00));
    }

    // Slotted outputs, parallel over external mode tuples. With no photon
    // modes below rho0 the m+n >= 1 monomials act as zero on the block.
    const bool have_ext = !grid.modes_below(params.rho0 * (1 + 1e-12)).empty();
    std::vector<double> tuple_mass;
    for (const auto& [key, terms] : by_output) {
        if (key.first + key.second == 0 || !have_ext) continue;
        WickKernel k_out = make_kernel(key.first, key.second, og, grid);
        k_out.outer_chi = true;
        const long tuples = k_out.k_tuples();
        const int kd = k_out.k_dim();
        const int per_l = opt.l_max + 1;
        tuple_mass.assign(static_cast<std::size_t>(tuples) *
                              static_cast<std::size_t>(per_l),
                          0.0);
        WickKernel* dst = &k_out;
        const std::vector<const FdTerm*>* tptr = &terms;
        std::vector<double>* tmass = &tuple_mass;
        parallel_for(tuples, [&ctx, dst, tptr, tmass, kd, key, per_l,
                              &og](long t) {
            std::vector<int> cre(static_cast<std::size_t>(key.first));
            std::vector<int> ann(static_cast<std::size_t>(key.second));
            long rem = t;
            for (int d = key.first + key.second - 1; d >= 0; --d) {
                const int mode = dst->modes[static_cast<std::size_t>(
                    static_cast<int>(rem % kd))];
                rem /= kd;
                if (d < key.first)
                    cre[static_cast<std::size_t>(d)] = mode;
                else
                    ann[static_cast<std::size_t>(d - key.first)] = mode;
            }
            std::vector<cplx> acc(static_cast<std::size_t>(og.n_points()),
                                  cplx(0, 0));
            std::vector<double> local(static_cast<std::size_t>(per_l), 0.0);
            fd_tuple(ctx, *tptr, og, cre, ann, acc, local);
            for (int pt = 0; pt < og.n_points(); ++pt)
                dst->samples(dst->sample_index(pt, t)) =
                    acc[static_cast<std::size_t>(pt)];
            for (int li = 0; li < per_l; ++li)
                (*tmass)[static_cast<std::size_t>(t) *
                             static_cast<std::size_t>(per_l) +
                         static_cast<std::size_t>(li)] =
                    local[static_cast<std::size_t>(li)];
        });
        for (long t = 0; t < tuples; ++t)
            for (int li = 0; li < per_l; ++li)
                massL[static_cast<std::size_t>(li)] +=
                    tuple_mass[static_cast<std::size_t>(t) *
                                   static_cast<std::size_t>(per_l) +
                               static_cast<std::size_t>(li)];
        symmetrize(k_out, grid);
        out.kernels.emplace(key, std::move(k_out));
    }

    // Health of the Neumann series: per-order absolute masses must shrink
    // geometrically. Dipole parity links orders two apart (odd and even
    // chains pass through different matrix elements and can differ by large
    // constant factors), so each parity class is certified on its own: the
    // mass ratio between its last two populated orders must be < 1 and seeds
    // that class's geometric tail. A populated class with a single order
    // carries no estimate and leaves the tail unknown.
    double tail = 0;
    for (int parity = 0; parity < 2; ++parity) {
        int last = -1, prev = -1;
        for (int li = opt.l_max; li >= 1; --li) {
            if (li % 2 != parity || massL[static_cast<std::size_t>(li)] <= 0)
                continue;
            if (last < 0) {
                last = li;
            } else {
                prev = li;
                break;
            }
        }
        if (last < 0) continue;
        if (prev < 0) {
            tail = std::numeric_limits<double>::infinity();
            continue;
        }
        const double ratio = massL[static_cast<std::size_t>(last)] /
                             massL[static_cast<std::size_t>(prev)];
        RF_REQUIRE(ratio < 1.0,
                   "first_decimation: Neumann series not contracting, order "
                       << last << " / order " << prev << " mass ratio = "
                       << ratio);
        tail += massL[static_cast<std::size_t>(last)] * ratio / (1.0 - ratio);
    }

    if (report) {
        report->min_denominator = ctx.min_den.load();
        report->terms_evaluated = ctx.evals.load();
        report->tail_bound = tail;
        for (const auto& [key, k] : out.kernels)
            report->half_norms[key] = half_norm(k, grid);

        double d_const = 0;
        for (const int x : ctx.line_modes)
            d_const += grid.modes[static_cast<std::size_t>(x)].weight *
                       grid.modes[static_cast<std::size_t>(x)].abs_k;
        const double rb =
            opt.margin > 0
                ? 1.0 / opt.margin
                : (std::isfinite(report->min_denominator) &&
                           report->min_denominator > 0
                       ? 1.0 / report->min_denominator
                       : std::numeric_limits<double>::infinity());
        double dropped = 0;
        for (const FdDropped& d : en.dropped)
            dropped += d.base * std::pow(d_const, d.n_lines) *
                       std::pow(rb, d.L - 1);
        report->dropped_mass_bound = dropped;
    }

    check_family(out);
    return out;
}

}  // namespace resonflow
