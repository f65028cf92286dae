#ifndef NHNN_DPGMM_HPP
#define NHNN_DPGMM_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nhnn/tensor.hpp"

namespace nhnn {

// DP scaling parameter plus a Normal-Gamma base measure over per-dimension
// (mean, precision) pairs of the diagonal Gaussian likelihood.
struct DpGmmPrior {
    double alpha0 = 1.0;
    std::vector<double> m0;  // prior mean, per dim
    double kappa0 = 1.0;     // prior precision scale
    double a0 = 1.0;         // Gamma shape
    std::vector<double> b0;  // Gamma rate, per dim

    void validate(int d) const;
};

// Variational Beta posteriors over the stick fractions. The last stick
// consumes all remaining mass at weight extraction.
struct StickState {
    std::vector<double> gamma1, gamma2;
};

struct DpGmmModel {
    int Ttrunc = 0;
    int d = 0;
    std::vector<double> weights;       // length Ttrunc; sums to 1 (active entries only after pruning)
    Tensor means;                      // {Ttrunc, d}
    Tensor variances;                  // {Ttrunc, d}, floored at kVarianceFloor
    DpGmmPrior prior;
    StickState sticks;
    std::vector<double> elbo_trace;
    std::vector<std::uint8_t> active_mask;  // post-pruning; all 1 after fit

    int n_active() const;
    std::vector<int> active_indices() const;
};

struct CaviOptions {
    int Ttrunc = 10;
    double tol = 1e-6;
    int max_iter = 500;
    std::uint64_t seed = 0;
};

// pi_1 = beta_1, pi_k = beta_k * prod_{i<k}(1 - beta_i). Returns the weight
// vector and the residual mass 1 - sum(pi). Each beta must lie in (0,1).
std::pair<std::vector<double>, double> stick_weights(const std::vector<double>& beta);

// Empirical-Bayes default prior: m0 = data mean, kappa0 = 1, a0 = 1,
// b0 = per-dimension population variance.
DpGmmPrior empirical_prior(const Tensor& X, double alpha0);

// Coordinate-ascent variational inference for the truncated stick-breaking
// DP-GMM. Deterministic given (X, prior, options). Responsibilities are
// initialized by soft-assigning rows to squared-distance-weighted seed rows
// (k-means++ seeding rule; no clustering iterations).
DpGmmModel fit_cavi(const Tensor& X, const DpGmmPrior& prior, const CaviOptions& options);

// Posterior component probabilities of each row of X over the model's
// active components (log-space, log-sum-exp normalized). {n, n_active}.
Tensor responsibilities(const DpGmmModel& model, const Tensor& X);

// Argmax responsibility per row, ties toward the lowest index. Indices are
// positions in model.active_indices().
std::vector<int> hard_assign(const DpGmmModel& model, const Tensor& X);

// Deactivates components whose hard-assigned share of X falls below
// threshold (the largest-share component always survives), renormalizes
// weights over survivors and reassigns every row among them.
std::pair<DpGmmModel, std::vector<int>> prune_and_reassign(const DpGmmModel& model,
                                                           const Tensor& X,
                                                           double threshold = 0.10);

void save_dpgmm(const DpGmmModel& model, const std::string& path);
DpGmmModel load_dpgmm(const std::string& path);

}  // namespace nhnn

#endif
