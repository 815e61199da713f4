#pragma once
// Truncated bosonic Fock space over a ModeGrid: deterministic enumeration of
// occupation states under a total photon-number cap and a total field-energy
// cap, with cached per-state energy and momentum.

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "resonflow/common.hpp"
#include "resonflow/grid.hpp"

namespace resonflow {

// Sparse occupation record: (mode index, count >= 1), strictly ascending in
// the mode index. The empty vector is the vacuum.
using FockState = std::vector<std::pair<int, int>>;

class FockBasis {
  public:
    FockBasis() = default;

    int dim() const { return static_cast<int>(states_.size()); }
    int n_max() const { return n_max_; }
    double e_max() const { return e_max_; }
    const ModeGrid& grid() const { return *grid_; }

    const FockState& state(int i) const { return states_[i]; }
    double energy(int i) const { return energy_[i]; }        // sum n |k|
    const Vec3& momentum(int i) const { return momentum_[i]; }  // sum n k
    int photon_count(int i) const { return count_[i]; }

    // Index of a state, or -1 if it is not in the basis.
    int index_of(const FockState& s) const;

    // Occupancy of one mode in state i (0 if absent).
    int occupancy(int i, int mode) const;

    // Indices of all states with energy <= threshold, ascending.
    std::vector<int> block_below(double threshold) const;

    friend FockBasis build_basis(const ModeGrid& grid, int n_max, double e_max,
                                 std::size_t max_dim);

  private:
    const ModeGrid* grid_ = nullptr;
    int n_max_ = 0;
    double e_max_ = 0.0;
    std::vector<FockState> states_;
    std::vector<double> energy_;
    std::vector<Vec3> momentum_;
    std::vector<int> count_;
    std::map<FockState, int> index_;
};

// Enumerates every occupation state with total photon number <= n_max and
// total energy <= e_max. States are ordered by photon number, then
// lexicographically; the vacuum is index 0. Throws if the dimension would
// exceed max_dim.
FockBasis build_basis(const ModeGrid& grid, int n_max, double e_max,
                      std::size_t max_dim = 2000000);

// a_x |i> = sqrt(n_x / w_x) |i - delta_x>. Returns (target index, amplitude);
// (-1, 0) if the mode is unoccupied.
std::pair<int, double> annihilate(const FockBasis& basis, int i, int mode);

// a*_x |i> = sqrt((n_x + 1) / w_x) |i + delta_x>. Returns (-1, 0) when the
// target state falls outside the basis (number or energy cap): operators are
// compressed to the truncated space.
std::pair<int, double> create(const FockBasis& basis, int i, int mode);

}  // namespace resonflow
