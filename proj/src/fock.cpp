#include "resonflow/fock.hpp"

#include <algorithm>
#include <cmath>

namespace resonflow {

int FockBasis::index_of(const FockState& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? -1 : it->second;
}

int FockBasis::occupancy(int i, int mode) const {
    for (const auto& [m, c] : states_[i])
        if (m == mode) return c;
    return 0;
}

std::vector<int> FockBasis::block_below(double threshold) const {
    std::vector<int> out;
    for (int i = 0; i < dim(); ++i)
        if (energy_[i] <= threshold) out.push_back(i);
    return out;
}

namespace {

void enumerate_states(const ModeGrid& grid, int mode, int n_left, double e_left,
                      FockState& partial, std::vector<FockState>& out,
                      std::size_t max_dim) {
    RF_REQUIRE(out.size() <= max_dim,
               "build_basis: dimension exceeds max_dim = " << max_dim
               << "; tighten n_max/e_max or raise the cap");
    out.push_back(partial);
    if (n_left == 0) return;
    for (int m = mode; m < grid.n_modes(); ++m) {
        const double ek = grid.modes[m].abs_k;
        if (ek > e_left) continue;
        partial.emplace_back(m, 1);
        int placed = 1;
        while (true) {
            enumerate_states(grid, m + 1, n_left - placed, e_left - placed * ek,
                             partial, out, max_dim);
            if (placed == n_left || (placed + 1) * ek > e_left) break;
            ++placed;
            partial.back().second = placed;
        }
        partial.pop_back();
    }
}

}  // namespace

FockBasis build_basis(const ModeGrid& grid, int n_max, double e_max,
                      std::size_t max_dim) {
    RF_REQUIRE(n_max >= 0, "build_basis: n_max must be >= 0");
    RF_REQUIRE(e_max >= 0.0, "build_basis: e_max must be >= 0");
    FockBasis basis;
    basis.grid_ = &grid;
    basis.n_max_ = n_max;
    basis.e_max_ = e_max;

    FockState partial;
    enumerate_states(grid, 0, n_max, e_max, partial, basis.states_, max_dim);

    // Deterministic order: photon count, then lexicographic occupations.
    auto total_n = [](const FockState& s) {
        int n = 0;
        for (const auto& [m, c] : s) n += c;
        return n;
    };
    std::sort(basis.states_.begin(), basis.states_.end(),
              [&](const FockState& a, const FockState& b) {
                  const int na = total_n(a), nb = total_n(b);
                  if (na != nb) return na < nb;
                  return a < b;
              });

    basis.energy_.resize(basis.states_.size());
    basis.momentum_.resize(basis.states_.size());
    basis.count_.resize(basis.states_.size());
    for (std::size_t i = 0; i < basis.states_.size(); ++i) {
        double e = 0.0;
        Vec3 l = Vec3::Zero();
        int n = 0;
        for (const auto& [m, c] : basis.states_[i]) {
            e += c * grid.modes[m].abs_k;
            l += c * grid.modes[m].k;
            n += c;
        }
        basis.energy_[i] = e;
        basis.momentum_[i] = l;
        basis.count_[i] = n;
        basis.index_[basis.states_[i]] = static_cast<int>(i);
    }
    RF_REQUIRE(basis.states_[0].empty(), "build_basis: vacuum must be index 0");
    return basis;
}

std::pair<int, double> annihilate(const FockBasis& basis, int i, int mode) {
    const FockState& s = basis.state(i);
    FockState t;
    t.reserve(s.size());
    int n_x = 0;
    for (const auto& [m, c] : s) {
        if (m == mode) {
            n_x = c;
            if (c > 1) t.emplace_back(m, c - 1);
        } else {
            t.emplace_back(m, c);
        }
    }
    if (n_x == 0) return {-1, 0.0};
    const int j = basis.index_of(t);
    RF_REQUIRE(j >= 0, "annihilate: target state missing from basis (internal)");
    const double w = basis.grid().modes[mode].weight;
    return {j, std::sqrt(n_x / w)};
}

std::pair<int, double> create(const FockBasis& basis, int i, int mode) {
    const FockState& s = basis.state(i);
    FockState t;
    t.reserve(s.size() + 1);
    int n_x = 0;
    bool placed = false;
    for (const auto& [m, c] : s) {
        if (m == mode) {
            n_x = c;
            t.emplace_back(m, c + 1);
            placed = true;
        } else {
            if (!placed && m > mode) {
                t.emplace_back(mode, 1);
                placed = true;
            }
            t.emplace_back(m, c);
        }
    }
    if (!placed) t.emplace_back(mode, 1);
    const int j = basis.index_of(t);
    if (j < 0) return {-1, 0.0};  // outside the truncated space
    const double w = basis.grid().modes[mode].weight;
    return {j, std::sqrt((n_x + 1) / w)};
}

}  // namespace resonflow
