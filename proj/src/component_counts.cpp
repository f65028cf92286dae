#include "nhnn/component_counts.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nhnn/rng.hpp"

namespace nhnn {

namespace {
constexpr int kMaxN = 25;

// lower-triangular table z(n,k), filled once
const std::vector<std::vector<StirlingInt>>& stirling_table() {
    static const std::vector<std::vector<StirlingInt>> table = [] {
        std::vector<std::vector<StirlingInt>> t(kMaxN + 1);
        t[0] = {StirlingInt(1)};
        for (int n = 1; n <= kMaxN; ++n) {
            t[n].assign(n + 1, StirlingInt(0));
            for (int k = 1; k <= n; ++k)
                t[n][k] = (k <= n - 1 ? StirlingInt(n - 1) * t[n - 1][k] : StirlingInt(0)) +
                          t[n - 1][k - 1];
        }
        return t;
    }();
    return table;
}
}  // namespace

StirlingInt stirling_unsigned(int n, int k) {
    if (n < 0 || k < 0 || k > n) throw std::domain_error("stirling_unsigned: need 0 <= k <= n");
    if (n > kMaxN)
        throw std::range_error("stirling_unsigned: n > 25 exceeds the exact-integer guard");
    return stirling_table()[n][k];
}

std::string stirling_to_string(StirlingInt v) {
    if (v == 0) return "0";
    std::string s;
    while (v > 0) {
        s += static_cast<char>('0' + static_cast<int>(v % 10));
        v /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

std::vector<double> component_count_pmf(int n, double alpha0) {
    if (n < 1) throw std::domain_error("component_count_pmf: n must be >= 1");
    if (!(alpha0 > 0.0)) throw std::domain_error("component_count_pmf: alpha0 must be > 0");
    if (n > kMaxN) throw std::range_error("component_count_pmf: n exceeds the exact guard");
    std::vector<long double> w(n);
    long double total = 0.0L;
    for (int k = 1; k <= n; ++k) {
        w[k - 1] = static_cast<long double>(stirling_unsigned(n, k)) *
                   std::pow(static_cast<long double>(alpha0), k);
        total += w[k - 1];
    }
    std::vector<double> p(n);
    for (int k = 0; k < n; ++k) p[k] = static_cast<double>(w[k] / total);
    return p;
}

std::pair<double, double> expected_components(int n, double alpha0) {
    if (n < 1) throw std::domain_error("expected_components: n must be >= 1");
    if (!(alpha0 > 0.0)) throw std::domain_error("expected_components: alpha0 must be > 0");
    double exact = 0.0;
    for (int i = 1; i <= n; ++i) exact += 1.0 / (alpha0 + i - 1);
    exact *= alpha0;
    const double approx = alpha0 * std::log((n + alpha0) / alpha0);
    return {exact, approx};
}

std::vector<double> crp_simulate(int n, double alpha0, int n_samples, std::uint64_t seed) {
    if (n < 1 || n_samples < 1) throw std::domain_error("crp_simulate: n, n_samples must be >= 1");
    if (!(alpha0 > 0.0)) throw std::domain_error("crp_simulate: alpha0 must be > 0");
    Rng rng(seed);
    std::vector<long> hist(n, 0);
    std::vector<int> table_sizes;
    for (int s = 0; s < n_samples; ++s) {
        table_sizes.clear();
        table_sizes.push_back(1);  // first customer opens a table
        for (int i = 1; i < n; ++i) {
            const double u = rng.uniform() * (i + alpha0);
            double acc = 0.0;
            int chosen = -1;
            for (std::size_t t = 0; t < table_sizes.size(); ++t) {
                acc += table_sizes[t];
                if (u < acc) {
                    chosen = static_cast<int>(t);
                    break;
                }
            }
            if (chosen < 0)
                table_sizes.push_back(1);
            else
                table_sizes[chosen]++;
        }
        hist[table_sizes.size() - 1]++;
    }
    std::vector<double> pmf(n);
    for (int k = 0; k < n; ++k) pmf[k] = static_cast<double>(hist[k]) / n_samples;
    return pmf;
}

}  // namespace nhnn
