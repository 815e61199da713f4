#include "resonflow/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace resonflow {

namespace {

Eigen::VectorXd uniform_nodes(int n, double lo, double hi) {
    Eigen::VectorXd x(n);
    if (n == 1) {
        x(0) = 0.5 * (lo + hi);
        return x;
    }
    for (int i = 0; i < n; ++i)
        x(i) = lo + (hi - lo) * static_cast<double>(i) /
                        static_cast<double>(n - 1);
    return x;
}

// Bracketing interval and blend weight for piecewise-linear interpolation;
// constant extrapolation is never needed since callers clamp the query.
struct Bracket {
    int i0 = 0, i1 = 0;
    double t = 0;  // value = (1-t)*f(i0) + t*f(i1)
};

Bracket locate(const Eigen::VectorXd& nodes, double x) {
    Bracket b;
    const int n = static_cast<int>(nodes.size());
    if (n == 1) return b;
    if (x <= nodes(0)) return b;
    if (x >= nodes(n - 1)) {
        b.i0 = b.i1 = n - 1;
        return b;
    }
    int lo = 0, hi = n - 1;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        (nodes(mid) <= x) ? lo = mid : hi = mid;
    }
    b.i0 = lo;
    b.i1 = hi;
    const double span = nodes(hi) - nodes(lo);
    b.t = span > 0 ? (x - nodes(lo)) / span : 0.0;
    return b;
}

// Universal compression weight of an outer_chi kernel at radial value r and
// K-tuple index t: chi(r + sum of creation-slot |k|) * chi(r + annihilation
// sum). Returns 1 for bare kernels and for (0,0).
double outer_weight(const WickKernel& k, double r, long t) {
    if (!k.outer_chi) return 1.0;
    const int s = k.m + k.n;
    const int kd = k.k_dim();
    double cre = 0.0, ann = 0.0;
    for (int d = s - 1; d >= 0; --d) {
        const double a =
            k.mode_abs[static_cast<std::size_t>(static_cast<int>(t % kd))];
        t /= kd;
        (d < k.m ? cre : ann) += a;
    }
    return chi_rho(r + cre, k.grid.rho) * chi_rho(r + ann, k.grid.rho);
}

}  // namespace

LGrid make_lgrid(double rho, int n_r, int n_u, int n_v) {
    RF_REQUIRE(rho > 0, "make_lgrid: scale must be positive, got " << rho);
    RF_REQUIRE(n_r >= 2, "make_lgrid: need at least 2 radial nodes (0 and rho)");
    RF_REQUIRE(n_u >= 1 && n_v >= 1, "make_lgrid: empty direction grid");
    LGrid g;
    g.rho = rho;
    g.r.resize(n_r);
    // Chebyshev–Lobatto points mapped to [0, rho], ascending.
    for (int i = 0; i < n_r; ++i)
        g.r(i) = rho * 0.5 *
                 (1.0 - std::cos(M_PI * static_cast<double>(i) /
                                 static_cast<double>(n_r - 1)));
    g.r(0) = 0.0;
    g.r(n_r - 1) = rho;
    g.u = uniform_nodes(n_u, -1.0, 1.0);
    g.v = uniform_nodes(n_v, 0.0, 1.0);
    return g;
}

LParPerp split_l(const Vec3& l, const Vec3& axis) {
    LParPerp out;
    out.par = l.dot(axis);
    out.perp = (l - out.par * axis).norm();
    return out;
}

long WickKernel::k_tuples() const {
    long t = 1;
    for (int s = 0; s < m + n; ++s) t *= k_dim();
    return t;
}

int WickKernel::slot_of(int mode_id) const {
    const auto it = std::lower_bound(modes.begin(), modes.end(), mode_id);
    if (it == modes.end() || *it != mode_id) return -1;
    return static_cast<int>(it - modes.begin());
}

WickKernel make_kernel(int m, int n, const LGrid& lgrid, const ModeGrid& grid) {
    RF_REQUIRE(m >= 0 && n >= 0, "make_kernel: negative slot count");
    WickKernel k;
    k.m = m;
    k.n = n;
    k.grid = lgrid;
    for (int x = 0; x < grid.n_modes(); ++x)
        if (grid.modes[static_cast<std::size_t>(x)].abs_k <=
            lgrid.rho * (1.0 + 1e-12)) {
            k.modes.push_back(x);
            k.mode_abs.push_back(grid.modes[static_cast<std::size_t>(x)].abs_k);
        }
    if (m + n > 0)
        RF_REQUIRE(!k.modes.empty(),
                   "make_kernel: no photon modes below scale " << lgrid.rho);
    const long total = static_cast<long>(lgrid.n_points()) * k.k_tuples();
    RF_REQUIRE(total <= 50'000'000,
               "make_kernel: sample storage too large (" << total << ")");
    k.samples = Eigen::VectorXcd::Zero(total);
    return k;
}

cplx eval_kernel(const WickKernel& k, double r, double l_par, double l_perp,
                 const std::vector<int>& slot_modes) {
    RF_REQUIRE(static_cast<int>(slot_modes.size()) == k.m + k.n,
               "eval_kernel: expected " << k.m + k.n << " slot modes, got "
                                        << slot_modes.size());
    long k_flat = 0;
    for (const int mode : slot_modes) {
        const int digit = k.slot_of(mode);
        if (digit < 0) return cplx(0, 0);
        k_flat = k_flat * k.k_dim() + digit;
    }
    return eval_kernel_flat(k, r, l_par, l_perp, k_flat);
}

cplx eval_kernel_flat(const WickKernel& k, double r, double l_par,
                      double l_perp, long k_flat) {
    const double rho = k.grid.rho;
    if (r < -1e-12 || r > rho + 1e-12 * std::max(1.0, rho)) return cplx(0, 0);
    r = std::min(std::max(r, 0.0), rho);

    double u = 0, v = 0;
    if (r > 1e-14) {
        u = std::min(1.0, std::max(-1.0, l_par / r));
        const double s = r * std::sqrt(std::max(0.0, 1.0 - u * u));
        if (s > 1e-14) v = std::min(1.0, std::max(0.0, l_perp / s));
    }

    const Bracket br = locate(k.grid.r, r);
    const Bracket bu = locate(k.grid.u, u);
    const Bracket bv = locate(k.grid.v, v);
    cplx acc(0, 0);
    for (int cr = 0; cr < 2; ++cr) {
        const double wr = cr ? br.t : 1.0 - br.t;
        if (wr == 0.0) continue;
        const int ir = cr ? br.i1 : br.i0;
        for (int cu = 0; cu < 2; ++cu) {
            const double wu = cu ? bu.t : 1.0 - bu.t;
            if (wu == 0.0) continue;
            const int iu = cu ? bu.i1 : bu.i0;
            for (int cv = 0; cv < 2; ++cv) {
                const double wv = cv ? bv.t : 1.0 - bv.t;
                if (wv == 0.0) continue;
                const int iv = cv ? bv.i1 : bv.i0;
                acc += wr * wu * wv *
                       k.samples(k.sample_index(k.grid.flat(ir, iu, iv), k_flat));
            }
        }
    }
    return acc * outer_weight(k, r, k_flat);
}

void symmetrize(WickKernel& k, const ModeGrid&) {
    if (k.m <= 1 && k.n <= 1) return;  // nothing to permute
    const int s = k.m + k.n;
    const int kd = k.k_dim();
    const long tuples = k.k_tuples();
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(k.samples.size());

    std::vector<int> digits(static_cast<std::size_t>(s));
    std::vector<int> perm_m(static_cast<std::size_t>(k.m)),
        perm_n(static_cast<std::size_t>(k.n));
    for (long t = 0; t < tuples; ++t) {
        long rem = t;
        for (int d = s - 1; d >= 0; --d) {
            digits[static_cast<std::size_t>(d)] = static_cast<int>(rem % kd);
            rem /= kd;
        }
        // Average the source value over all within-group permutations.
        std::iota(perm_m.begin(), perm_m.end(), 0);
        long count = 0;
        std::vector<cplx> acc(static_cast<std::size_t>(k.grid.n_points()),
                              cplx(0, 0));
        do {
            std::iota(perm_n.begin(), perm_n.end(), 0);
            do {
                long src = 0;
                for (int d = 0; d < k.m; ++d)
                    src = src * kd +
                          digits[static_cast<std::size_t>(
                              perm_m[static_cast<std::size_t>(d)])];
                for (int d = 0; d < k.n; ++d)
                    src = src * kd +
                          digits[static_cast<std::size_t>(
                              k.m + perm_n[static_cast<std::size_t>(d)])];
                for (int pt = 0; pt < k.grid.n_points(); ++pt)
                    acc[static_cast<std::size_t>(pt)] +=
                        k.samples(k.sample_index(pt, src));
                ++count;
            } while (std::next_permutation(perm_n.begin(), perm_n.end()));
        } while (std::next_permutation(perm_m.begin(), perm_m.end()));
        for (int pt = 0; pt < k.grid.n_points(); ++pt)
            out(k.sample_index(pt, t)) =
                acc[static_cast<std::size_t>(pt)] / static_cast<double>(count);
    }
    k.samples.swap(out);
}

double half_norm(const WickKernel& k, const ModeGrid& grid) {
    if (k.samples.size() == 0) return 0.0;
    const long tuples = k.k_tuples();
    const int kd = k.k_dim();
    double best = 0.0;
    for (long t = 0; t < tuples; ++t) {
        long rem = t;
        double denom = 1.0;
        for (int d = 0; d < k.m + k.n; ++d) {
            const int digit = static_cast<int>(rem % kd);
            rem /= kd;
            denom *= std::sqrt(
                grid.modes[static_cast<std::size_t>(
                               k.modes[static_cast<std::size_t>(digit)])]
                    .abs_k);
        }
        const int nuv = k.grid.n_u() * k.grid.n_v();
        for (int pt = 0; pt < k.grid.n_points(); ++pt) {
            const double w = outer_weight(k, k.grid.r(pt / nuv), t);
            best = std::max(
                best, w * std::abs(k.samples(k.sample_index(pt, t))) / denom);
        }
    }
    return best;
}

double kernel_block_bound(const WickKernel& k, const ModeGrid& grid,
                          double rho) {
    if (k.samples.size() == 0) return 0.0;
    const long tuples = k.k_tuples();
    const int kd = k.k_dim();
    const int s = k.m + k.n;
    const int nuv = k.grid.n_u() * k.grid.n_v();
    const int nr = k.grid.n_r();
    double sum = 0.0;
    for (long t = 0; t < tuples; ++t) {
        long rem = t;
        double meas = 1.0;
        for (int d = 0; d < s; ++d) {
            const PhotonMode& mo = grid.modes[static_cast<std::size_t>(
                k.modes[static_cast<std::size_t>(static_cast<int>(rem % kd))])];
            rem /= kd;
            meas *= mo.weight / mo.abs_k;
        }
        // Cell-wise sup of |core| * outer: node maxima of the core over each
        // radial cell, weighted by the compression at the cell's inner
        // radius (outer_weight decreases in r).
        double sup = 0.0;
        for (int ir = 0; ir + 1 < nr || (nr == 1 && ir == 0); ++ir) {
            double core = 0.0;
            for (int dr = 0; dr < (nr == 1 ? 1 : 2); ++dr)
                for (int uv = 0; uv < nuv; ++uv)
                    core = std::max(
                        core, std::abs(k.samples(k.sample_index(
                                  (ir + dr) * nuv + uv, t))));
            sup = std::max(sup, core * outer_weight(k, k.grid.r(ir), t));
            if (nr == 1) break;
        }
        sum += meas * sup * sup;
    }
    return std::pow(rho, 0.5 * s) * std::sqrt(sum);
}

const WickKernel* KernelFamily::find(int m, int n) const {
    const auto it = kernels.find({m, n});
    return it == kernels.end() ? nullptr : &it->second;
}

WickKernel* KernelFamily::find(int m, int n) {
    const auto it = kernels.find({m, n});
    return it == kernels.end() ? nullptr : &it->second;
}

cplx KernelFamily::w00(double r, double l_par, double l_perp) const {
    cplx value = free(r, l_par, l_perp);
    if (const WickKernel* corr = find(0, 0)) {
        value += eval_kernel(*corr, r, l_par, l_perp, {});
    }
    return value;
}

void check_family(const KernelFamily& fam, double tol) {
    RF_REQUIRE(fam.rho > 0, "check_family: scale must be positive");
    for (const auto& [key, k] : fam.kernels) {
        RF_REQUIRE(k.m == key.first && k.n == key.second,
                   "check_family: kernel (" << k.m << "," << k.n
                                            << ") stored under key ("
                                            << key.first << "," << key.second
                                            << ")");
        RF_REQUIRE(std::abs(k.grid.rho - fam.rho) <=
                       1e-12 * std::max(1.0, fam.rho),
                   "check_family: kernel scale " << k.grid.rho
                                                 << " != family scale "
                                                 << fam.rho);
        RF_REQUIRE(std::is_sorted(k.modes.begin(), k.modes.end()),
                   "check_family: kernel mode list not sorted");
        RF_REQUIRE(k.mode_abs.size() == k.modes.size(),
                   "check_family: kernel |k| table out of step with mode list");
        RF_REQUIRE(k.samples.size() ==
                       static_cast<long>(k.grid.n_points()) * k.k_tuples(),
                   "check_family: sample count mismatch for ("
                       << k.m << "," << k.n << ")");
    }
    if (const WickKernel* w00 = fam.find(0, 0)) {
        const double scale = std::max(1.0, w00->samples.cwiseAbs().maxCoeff());
        // All r = 0 nodes describe the same physical point (l = 0), so they
        // must agree. Kernels holding only the interaction correction beyond
        // the vacuum value additionally vanish there; compression-flagged
        // kernels keep the vacuum value, which need not be zero.
        const cplx origin =
            w00->outer_chi
                ? w00->samples(w00->sample_index(w00->grid.flat(0, 0, 0), 0))
                : cplx(0, 0);
        for (int iu = 0; iu < w00->grid.n_u(); ++iu)
            for (int iv = 0; iv < w00->grid.n_v(); ++iv) {
                const cplx val = w00->samples(
                    w00->sample_index(w00->grid.flat(0, iu, iv), 0));
                RF_REQUIRE(std::abs(val - origin) <= tol * scale,
                           "check_family: w_{0,0}(0, 0) = "
                               << val << ", expected " << origin);
            }
    }
}

}  // namespace resonflow
