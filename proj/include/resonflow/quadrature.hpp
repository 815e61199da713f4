#pragma once
// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
// on the Legendre recurrence. Deterministic to the last bit for a given n.

#include <vector>

namespace resonflow {

struct GaussLegendre {
    std::vector<double> x;  // nodes, ascending
    std::vector<double> w;  // weights, sum = 2
};

GaussLegendre gauss_legendre(int n);

}  // namespace resonflow
