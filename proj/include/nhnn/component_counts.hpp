#ifndef NHNN_COMPONENT_COUNTS_HPP
#define NHNN_COMPONENT_COUNTS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nhnn {

// Exact integers up to n = 25 need more than 64 bits (sum_k z(25,k) = 25!).
using StirlingInt = unsigned __int128;

// Unsigned Stirling number of the first kind, z(n+1,k) = n z(n,k) + z(n,k-1),
// z(0,0) = 1. Guarded to 0 <= k <= n <= 25.
StirlingInt stirling_unsigned(int n, int k);

std::string stirling_to_string(StirlingInt v);

// Distribution of the number of realized mixture components for n draws,
// p(k) proportional to z(n,k) * alpha0^k, k = 1..n, normalized explicitly.
std::vector<double> component_count_pmf(int n, double alpha0);

// Expected component count: the exact harmonic form and its log
// approximation alpha0 * ln((n + alpha0)/alpha0).
std::pair<double, double> expected_components(int n, double alpha0);

// Chinese-restaurant-process forward simulation; empirical pmf of the
// table count over k = 1..n.
std::vector<double> crp_simulate(int n, double alpha0, int n_samples, std::uint64_t seed);

}  // namespace nhnn

#endif
