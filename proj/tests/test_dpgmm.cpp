#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "nhnn/dpgmm.hpp"
#include "nhnn/evaluation.hpp"
#include "nhnn/rng.hpp"

using namespace nhnn;

namespace {

// Three well-separated diagonal Gaussians in d dimensions; returns the data
// and the generating assignment.
std::pair<Tensor, std::vector<int>> planted_clusters(int n_per, int d, double sep,
                                                     std::uint64_t seed) {
    Rng rng(seed);
    Tensor X({3 * n_per, d});
    std::vector<int> truth(3 * n_per);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < n_per; ++i) {
            const int row = c * n_per + i;
            truth[row] = c;
            for (int j = 0; j < d; ++j)
                X.at(row, j) = (j == c % d ? sep * c : 0.0) + rng.normal();
        }
    return {std::move(X), std::move(truth)};
}

// Hand-built model with unit variances and the given 1-d means/weights.
DpGmmModel toy_model(const std::vector<double>& means, const std::vector<double>& weights) {
    DpGmmModel m;
    m.Ttrunc = static_cast<int>(means.size());
    m.d = 1;
    m.means = Tensor({m.Ttrunc, 1});
    m.variances = Tensor({m.Ttrunc, 1});
    for (int k = 0; k < m.Ttrunc; ++k) {
        m.means.at(k, 0) = means[k];
        m.variances.at(k, 0) = 1.0;
    }
    m.weights = weights;
    m.active_mask.assign(m.Ttrunc, 1);
    return m;
}

Tensor column(const std::vector<double>& v) {
    Tensor X({static_cast<int>(v.size()), 1});
    X.data = v;
    return X;
}

}  // namespace

TEST_CASE("stick_weights closed forms") {
    auto [pi, residual] = stick_weights({0.5, 0.5});
    REQUIRE(pi.size() == 2);
    CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(residual == doctest::Approx(0.25).epsilon(1e-12));

    auto [single, r1] = stick_weights({0.3});
    CHECK(single[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r1 == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("stick_weights telescoping identity") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> beta(1 + rng.uniform_int(10));
        for (double& b : beta) b = 0.01 + 0.98 * rng.uniform();
        auto [pi, residual] = stick_weights(beta);
        double sum = residual, prod = 1.0;
        for (std::size_t k = 0; k < beta.size(); ++k) {
            CHECK(pi[k] >= 0.0);
            sum += pi[k];
            prod *= 1.0 - beta[k];
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
        CHECK(residual == doctest::Approx(prod).epsilon(1e-10));
    }
    CHECK_THROWS_AS(stick_weights({0.5, 1.0}), std::domain_error);
    CHECK_THROWS_AS(stick_weights({0.0}), std::domain_error);
}

TEST_CASE("empirical prior uses data mean and population variance") {
    Tensor X({2, 2});
    X.data = {0.0, 10.0, 2.0, 14.0};
    DpGmmPrior prior = empirical_prior(X, 1.5);
    CHECK(prior.alpha0 == 1.5);
    CHECK(prior.m0[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(prior.m0[1] == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(prior.kappa0 == 1.0);
    CHECK(prior.a0 == 1.0);
    CHECK(prior.b0[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(prior.b0[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("CAVI recovers planted well-separated clusters") {
    auto [X, truth] = planted_clusters(200, 2, 10.0, 7);
    CaviOptions opts;
    opts.seed = 7;
    DpGmmModel model = fit_cavi(X, empirical_prior(X, 1.0), opts);

    int big = 0;
    for (int k = 0; k < model.Ttrunc; ++k)
        if (model.weights[k] > 0.05) big++;
    CHECK(big == 3);

    auto [pruned, assignments] = prune_and_reassign(model, X, 0.05);
    CHECK(pruned.n_active() == 3);
    CHECK(adjusted_rand_index(assignments, truth) >= 0.95);
}

TEST_CASE("ELBO is monotone nondecreasing across random datasets") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        const int n = 60 + rng.uniform_int(60), d = 1 + rng.uniform_int(4);
        Tensor X({n, d});
        for (double& v : X.data) v = rng.normal() * (1.0 + rng.uniform()) + rng.uniform(-2, 2);
        CaviOptions opts;
        opts.Ttrunc = 8;
        opts.seed = seed;
        DpGmmModel model = fit_cavi(X, empirical_prior(X, 1.0), opts);
        REQUIRE(model.elbo_trace.size() >= 2);
        for (std::size_t i = 1; i < model.elbo_trace.size(); ++i) {
            const double prev = model.elbo_trace[i - 1], cur = model.elbo_trace[i];
            CHECK(cur - prev >= -1e-8 * std::fabs(prev));
        }
    }
}

TEST_CASE("CAVI is deterministic given data and seed") {
    auto [X, truth] = planted_clusters(50, 2, 8.0, 3);
    (void)truth;
    CaviOptions opts;
    opts.seed = 5;
    DpGmmModel a = fit_cavi(X, empirical_prior(X, 1.0), opts);
    DpGmmModel b = fit_cavi(X, empirical_prior(X, 1.0), opts);
    CHECK(a.elbo_trace == b.elbo_trace);
    CHECK(a.weights == b.weights);
    CHECK(a.means.data == b.means.data);
    CHECK(a.variances.data == b.variances.data);
}

TEST_CASE("identical data collapses onto one dominant component") {
    Tensor X({600, 2});
    for (int i = 0; i < 600; ++i) {
        X.at(i, 0) = 1.5;
        X.at(i, 1) = -0.5;
    }
    CaviOptions opts;
    opts.seed = 1;
    DpGmmModel model = fit_cavi(X, empirical_prior(X, 1.0), opts);
    double top = 0.0;
    for (double w : model.weights) top = std::max(top, w);
    CHECK(top > 0.95);
    for (double w : model.weights)
        if (w != top) CHECK(w < 1e-3);
    // variances respect the global floor
    for (double v : model.variances.data) CHECK(v >= kVarianceFloor);
}

TEST_CASE("responsibilities: symmetry, normalization and weight scaling") {
    DpGmmModel m = toy_model({-1.0, 1.0}, {0.5, 0.5});
    Tensor X = column({0.0, -1.0, 1.0, 50.0});
    Tensor R = responsibilities(m, X);
    REQUIRE(R.shape == std::vector<int>{4, 2});
    // midpoint between equal-weight symmetric components
    CHECK(R.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    // symmetric points mirror each other
    CHECK(R.at(1, 0) == doctest::Approx(R.at(2, 1)).epsilon(1e-12));
    // a point far in one component's tail is fully claimed by it
    CHECK(R.at(3, 1) > 1.0 - 1e-10);
    for (int i = 0; i < 4; ++i)
        CHECK(R.at(i, 0) + R.at(i, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // responsibilities depend on weights only through their ratios
    DpGmmModel scaled = m;
    for (double& w : scaled.weights) w *= 3.0;
    Tensor R2 = responsibilities(scaled, X);
    for (std::size_t i = 0; i < R.size(); ++i)
        CHECK(R.data[i] == doctest::Approx(R2.data[i]).epsilon(1e-12));

    // unequal weights shift the midpoint toward the heavier component
    DpGmmModel lop = toy_model({-1.0, 1.0}, {0.9, 0.1});
    Tensor R3 = responsibilities(lop, column({0.0}));
    CHECK(R3.at(0, 0) > 0.8);
    // density-ratio closed form at the midpoint: r0/r1 = w0/w1
    CHECK(R3.at(0, 0) / R3.at(0, 1) == doctest::Approx(9.0).epsilon(1e-9));
}

TEST_CASE("hard_assign breaks ties toward the lowest index") {
    DpGmmModel m = toy_model({-1.0, 1.0}, {0.5, 0.5});
    auto assign = hard_assign(m, column({0.0, -2.0, 2.0}));
    CHECK(assign == std::vector<int>{0, 0, 1});
}

TEST_CASE("pruning drops only sub-threshold components and conserves counts") {
    // shares 0.85 / 0.12 / 0.03 at threshold 0.10 -> only the last goes
    DpGmmModel m = toy_model({-10.0, 0.0, 10.0}, {0.5, 0.3, 0.2});
    std::vector<double> xs;
    for (int i = 0; i < 85; ++i) xs.push_back(-10.0 + 0.01 * i);
    for (int i = 0; i < 12; ++i) xs.push_back(0.0 + 0.01 * i);
    for (int i = 0; i < 3; ++i) xs.push_back(10.0 + 0.01 * i);
    Tensor X = column(xs);
    auto [pruned, assignments] = prune_and_reassign(m, X, 0.10);
    CHECK(pruned.n_active() == 2);
    CHECK(pruned.active_indices() == std::vector<int>{0, 1});
    CHECK(assignments.size() == xs.size());
    // every row reassigned among survivors; the orphaned rows join cluster 1
    long c0 = 0, c1 = 0;
    for (int a : assignments) {
        REQUIRE(a >= 0);
        REQUIRE(a < 2);
        (a == 0 ? c0 : c1)++;
    }
    CHECK(c0 == 85);
    CHECK(c1 == 15);
    // surviving weights renormalize to 1
    double sum = 0.0;
    for (int k : pruned.active_indices()) sum += pruned.weights[k];
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
    CHECK(pruned.weights[0] == doctest::Approx(0.5 / 0.8).epsilon(1e-12));

    // shares 0.80 / 0.20: nothing falls below threshold
    DpGmmModel m2 = toy_model({-10.0, 10.0}, {0.6, 0.4});
    std::vector<double> xs2;
    for (int i = 0; i < 80; ++i) xs2.push_back(-10.0);
    for (int i = 0; i < 20; ++i) xs2.push_back(10.0);
    auto [p2, a2] = prune_and_reassign(m2, column(xs2), 0.10);
    (void)a2;
    CHECK(p2.n_active() == 2);
    CHECK(p2.weights == m2.weights);

    // the largest component always survives, even alone below threshold
    DpGmmModel m3 = toy_model({0.0}, {1.0});
    auto [p3, a3] = prune_and_reassign(m3, column({0.0, 0.1}), 0.10);
    (void)a3;
    CHECK(p3.n_active() == 1);
}

TEST_CASE("dpgmm serialization round trips bit for bit") {
    auto [X, truth] = planted_clusters(40, 2, 8.0, 9);
    (void)truth;
    CaviOptions opts;
    opts.seed = 2;
    DpGmmModel model = fit_cavi(X, empirical_prior(X, 1.0), opts);
    auto [pruned, assignments] = prune_and_reassign(model, X);
    (void)assignments;

    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "nhnn_test_dpgmm.json";
    save_dpgmm(pruned, path.string());
    DpGmmModel loaded = load_dpgmm(path.string());
    fs::remove(path);

    CHECK(loaded.Ttrunc == pruned.Ttrunc);
    CHECK(loaded.d == pruned.d);
    CHECK(loaded.weights == pruned.weights);
    CHECK(loaded.means.data == pruned.means.data);
    CHECK(loaded.variances.data == pruned.variances.data);
    CHECK(loaded.active_mask == pruned.active_mask);
    CHECK(loaded.sticks.gamma1 == pruned.sticks.gamma1);
    CHECK(loaded.sticks.gamma2 == pruned.sticks.gamma2);
    // identical posteriors => identical responsibilities
    Tensor ra = responsibilities(pruned, X), rb = responsibilities(loaded, X);
    CHECK(ra.data == rb.data);
}

TEST_CASE("fit rejects invalid inputs") {
    Tensor X({4, 2});
    X.fill(0.0);
    DpGmmPrior prior = empirical_prior(X, 1.0);
    CaviOptions opts;
    opts.Ttrunc = 0;
    CHECK_THROWS_AS(fit_cavi(X, prior, opts), std::domain_error);
    DpGmmPrior bad = prior;
    bad.alpha0 = -1.0;
    CHECK_THROWS_AS(fit_cavi(X, bad, CaviOptions{}), std::domain_error);
}
