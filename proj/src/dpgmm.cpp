#include "nhnn/dpgmm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "nhnn/dataio.hpp"  // kVarianceFloor
#include "nhnn/rng.hpp"
#include "nhnn/special.hpp"

using nlohmann::json;

namespace nhnn {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void DpGmmPrior::validate(int dim) const {
    if (!(alpha0 > 0.0)) throw std::domain_error("dpgmm: alpha0 must be > 0");
    if (!(kappa0 > 0.0) || !(a0 > 0.0)) throw std::domain_error("dpgmm: kappa0, a0 must be > 0");
    if (static_cast<int>(m0.size()) != dim || static_cast<int>(b0.size()) != dim)
        throw std::domain_error("dpgmm: prior dimension mismatch");
    for (double b : b0)
        if (!(b > 0.0)) throw std::domain_error("dpgmm: b0 entries must be > 0");
}

int DpGmmModel::n_active() const {
    int k = 0;
    for (auto a : active_mask) k += a ? 1 : 0;
    return k;
}

std::vector<int> DpGmmModel::active_indices() const {
    std::vector<int> idx;
    for (int t = 0; t < Ttrunc; ++t)
        if (active_mask[t]) idx.push_back(t);
    return idx;
}

std::pair<std::vector<double>, double> stick_weights(const std::vector<double>& beta) {
    std::vector<double> pi(beta.size());
    double remaining = 1.0;
    for (std::size_t k = 0; k < beta.size(); ++k) {
        if (!(beta[k] > 0.0) || !(beta[k] < 1.0))
            throw std::domain_error("stick_weights: beta entries must lie in (0,1)");
        pi[k] = remaining * beta[k];
        remaining *= 1.0 - beta[k];
    }
    return {pi, remaining};
}

DpGmmPrior empirical_prior(const Tensor& X, double alpha0) {
    const int n = X.shape[0], d = X.shape[1];
    DpGmmPrior prior;
    prior.alpha0 = alpha0;
    prior.m0.assign(d, 0.0);
    prior.b0.assign(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) prior.m0[j] += X.at(i, j);
    for (int j = 0; j < d; ++j) prior.m0[j] /= n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double c = X.at(i, j) - prior.m0[j];
            prior.b0[j] += c * c;
        }
    for (int j = 0; j < d; ++j) prior.b0[j] = std::max(prior.b0[j] / n, kVarianceFloor);
    return prior;
}

DpGmmModel fit_cavi(const Tensor& X, const DpGmmPrior& prior, const CaviOptions& options) {
    if (X.shape.size() != 2) throw std::domain_error("fit_cavi: X must be 2-d");
    const int n = X.shape[0], d = X.shape[1];
    if (n < 2 || d < 1) throw std::domain_error("fit_cavi: need n >= 2, d >= 1");
    if (options.Ttrunc < 1) throw std::domain_error("fit_cavi: Ttrunc must be >= 1");
    if (!X.all_finite()) throw std::domain_error("fit_cavi: non-finite input");
    prior.validate(d);

    const int T = options.Ttrunc;
    const double alpha0 = prior.alpha0;

    // Initialization: pick Ttrunc seed rows by squared-distance-weighted
    // sampling (the k-means++ seeding rule, no clustering iterations) and
    // soft-assign every row to its nearest seeds under the prior scale.
    // Random-responsibility initialization gives all components the same
    // initial mean and reliably lands in merged local optima.
    Tensor r({n, T});
    {
        Rng rng(options.seed);
        std::vector<int> seeds;
        seeds.push_back(rng.uniform_int(n));
        std::vector<double> d2(n);
        auto sqdist = [&](int i, int s) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) {
                const double c = (X.at(i, j) - X.at(s, j));
                acc += c * c / prior.b0[j];
            }
            return acc;
        };
        for (int i = 0; i < n; ++i) d2[i] = sqdist(i, seeds[0]);
        while (static_cast<int>(seeds.size()) < T) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) total += d2[i];
            int pick;
            if (total <= 0.0) {
                pick = rng.uniform_int(n);  // all rows already covered
            } else {
                double u = rng.uniform() * total;
                pick = n - 1;
                for (int i = 0; i < n; ++i) {
                    u -= d2[i];
                    if (u <= 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
            seeds.push_back(pick);
            for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(i, pick));
        }
        std::vector<double> lr(T);
        for (int i = 0; i < n; ++i) {
            for (int t = 0; t < T; ++t) lr[t] = -0.5 * sqdist(i, seeds[t]);
            const double lse = log_sum_exp(lr.data(), T);
            for (int t = 0; t < T; ++t) r.at(i, t) = std::exp(lr[t] - lse);
        }
    }

    StickState sticks;
    sticks.gamma1.assign(T, 1.0);
    sticks.gamma2.assign(T, alpha0);
    Tensor m({T, d}), kappa({T, 1}), a({T, 1}), b({T, d});

    std::vector<double> Nt(T), elogbeta(T), elog1mbeta(T), elogpi(T);
    Tensor xbar({T, d}), S({T, d});
    std::vector<double> elbo_trace;
    std::vector<double> logrho(T);

    for (int iter = 0; iter < options.max_iter; ++iter) {
        // ---- statistics under current responsibilities
        for (int t = 0; t < T; ++t) {
            Nt[t] = 0.0;
            for (int j = 0; j < d; ++j) xbar.at(t, j) = 0.0;
        }
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < T; ++t) {
                const double rit = r.at(i, t);
                Nt[t] += rit;
                for (int j = 0; j < d; ++j) xbar.at(t, j) += rit * X.at(i, j);
            }
        for (int t = 0; t < T; ++t) {
            const double denom = std::max(Nt[t], 1e-300);
            for (int j = 0; j < d; ++j) xbar.at(t, j) /= denom;
        }
        S.fill(0.0);
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < T; ++t) {
                const double rit = r.at(i, t);
                for (int j = 0; j < d; ++j) {
                    const double c = X.at(i, j) - xbar.at(t, j);
                    S.at(t, j) += rit * c * c;
                }
            }

        // ---- stick updates (last stick pinned to consume the remainder)
        double tail = 0.0;  // sum of Nt for s > t
        for (int t = T - 1; t >= 0; --t) {
            if (t < T - 1) {
                sticks.gamma1[t] = 1.0 + Nt[t];
                sticks.gamma2[t] = alpha0 + tail;
            }
            tail += Nt[t];
        }
        for (int t = 0; t < T - 1; ++t) {
            const double g1 = sticks.gamma1[t], g2 = sticks.gamma2[t];
            const double psisum = digamma(g1 + g2);
            elogbeta[t] = digamma(g1) - psisum;
            elog1mbeta[t] = digamma(g2) - psisum;
        }
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            elogpi[t] = acc + (t < T - 1 ? elogbeta[t] : 0.0);
            if (t < T - 1) acc += elog1mbeta[t];
        }

        // ---- Normal-Gamma updates
        for (int t = 0; t < T; ++t) {
            const double kap = prior.kappa0 + Nt[t];
            kappa.at(t, 0) = kap;
            a.at(t, 0) = prior.a0 + 0.5 * Nt[t];
            for (int j = 0; j < d; ++j) {
                const double xb = xbar.at(t, j);
                m.at(t, j) = (prior.kappa0 * prior.m0[j] + Nt[t] * xb) / kap;
                const double dm = xb - prior.m0[j];
                b.at(t, j) = prior.b0[j] + 0.5 * S.at(t, j)
                           + 0.5 * prior.kappa0 * Nt[t] * dm * dm / kap;
            }
        }

        // ---- responsibility update
        for (int i = 0; i < n; ++i) {
            for (int t = 0; t < T; ++t) {
                double ll = 0.0;
                const double at = a.at(t, 0), kap = kappa.at(t, 0);
                for (int j = 0; j < d; ++j) {
                    const double bt = b.at(t, j);
                    const double c = X.at(i, j) - m.at(t, j);
                    ll += 0.5 * (digamma(at) - std::log(bt) - kLog2Pi
                                 - (at / bt) * c * c - 1.0 / kap);
                }
                logrho[t] = elogpi[t] + ll;
            }
            const double lse = log_sum_exp(logrho.data(), T);
            for (int t = 0; t < T; ++t) r.at(i, t) = std::exp(logrho[t] - lse);
        }

        // ---- ELBO
        double elbo = 0.0;
        // stick prior/entropy terms, free sticks only
        for (int t = 0; t < T - 1; ++t) {
            const double g1 = sticks.gamma1[t], g2 = sticks.gamma2[t];
            elbo += std::log(alpha0) + (alpha0 - 1.0) * elog1mbeta[t];
            const double logB = std::lgamma(g1) + std::lgamma(g2) - std::lgamma(g1 + g2);
            elbo -= -logB + (g1 - 1.0) * elogbeta[t] + (g2 - 1.0) * elog1mbeta[t];
        }
        // Normal-Gamma prior/entropy terms
        for (int t = 0; t < T; ++t) {
            const double at = a.at(t, 0), kap = kappa.at(t, 0);
            const double psia = digamma(at);
            for (int j = 0; j < d; ++j) {
                const double bt = b.at(t, j);
                const double elogl = psia - std::log(bt);
                const double el = at / bt;
                const double dm = m.at(t, j) - prior.m0[j];
                elbo += 0.5 * (std::log(prior.kappa0) - kLog2Pi) + 0.5 * elogl
                      - 0.5 * prior.kappa0 * (el * dm * dm + 1.0 / kap)
                      + prior.a0 * std::log(prior.b0[j]) - std::lgamma(prior.a0)
                      + (prior.a0 - 1.0) * elogl - prior.b0[j] * el;
                elbo -= 0.5 * (std::log(kap) - kLog2Pi) + 0.5 * elogl - 0.5
                      + at * std::log(bt) - std::lgamma(at)
                      + (at - 1.0) * (psia - std::log(bt)) - at;
            }
        }
        // allocation and likelihood terms
        for (int i = 0; i < n; ++i) {
            for (int t = 0; t < T; ++t) {
                const double rit = r.at(i, t);
                if (rit <= 0.0) continue;
                double ll = 0.0;
                const double at = a.at(t, 0), kap = kappa.at(t, 0);
                for (int j = 0; j < d; ++j) {
                    const double bt = b.at(t, j);
                    const double c = X.at(i, j) - m.at(t, j);
                    ll += 0.5 * (digamma(at) - std::log(bt) - kLog2Pi
                                 - (at / bt) * c * c - 1.0 / kap);
                }
                elbo += rit * (elogpi[t] + ll - std::log(rit));
            }
        }

        elbo_trace.push_back(elbo);
        if (iter > 0) {
            const double prev = elbo_trace[elbo_trace.size() - 2];
            if (std::fabs(elbo - prev) < options.tol * std::fabs(elbo)) break;
        }
    }

    // ---- extraction: posterior means, last stick consumes the remainder
    DpGmmModel model;
    model.Ttrunc = T;
    model.d = d;
    model.prior = prior;
    model.sticks = sticks;
    model.elbo_trace = std::move(elbo_trace);
    model.active_mask.assign(T, 1);
    model.means = Tensor({T, d});
    model.variances = Tensor({T, d});
    model.weights.assign(T, 0.0);
    double remaining = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta_mean =
            (t < T - 1) ? sticks.gamma1[t] / (sticks.gamma1[t] + sticks.gamma2[t]) : 1.0;
        model.weights[t] = remaining * beta_mean;
        remaining *= 1.0 - beta_mean;
        const double at = a.at(t, 0);
        for (int j = 0; j < d; ++j) {
            model.means.at(t, j) = m.at(t, j);
            model.variances.at(t, j) = std::max(b.at(t, j) / at, kVarianceFloor);
        }
    }
    return model;
}

namespace {

// log responsibilities of one row over the active components
void log_resp_row(const DpGmmModel& model, const std::vector<int>& active,
                  const double* x, double* out) {
    const int k = static_cast<int>(active.size());
    for (int c = 0; c < k; ++c) {
        const int t = active[c];
        double lp = std::log(std::max(model.weights[t], 1e-300));
        for (int j = 0; j < model.d; ++j) {
            const double var = model.variances.at(t, j);
            const double diff = x[j] - model.means.at(t, j);
            lp += -0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
        }
        out[c] = lp;
    }
    const double lse = log_sum_exp(out, k);
    for (int c = 0; c < k; ++c) out[c] = std::exp(out[c] - lse);
}

}  // namespace

Tensor responsibilities(const DpGmmModel& model, const Tensor& X) {
    if (X.shape.size() != 2 || X.shape[1] != model.d)
        throw std::domain_error("responsibilities: dimension mismatch");
    const int n = X.shape[0];
    const std::vector<int> active = model.active_indices();
    Tensor r({n, static_cast<int>(active.size())});
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        log_resp_row(model, active, X.ptr() + static_cast<std::size_t>(i) * model.d,
                     r.ptr() + static_cast<std::size_t>(i) * active.size());
    return r;
}

std::vector<int> hard_assign(const DpGmmModel& model, const Tensor& X) {
    const Tensor r = responsibilities(model, X);
    const int n = r.shape[0], k = r.shape[1];
    std::vector<int> assign(n);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (r.at(i, c) > r.at(i, best)) best = c;
        assign[i] = best;
    }
    return assign;
}

std::pair<DpGmmModel, std::vector<int>> prune_and_reassign(const DpGmmModel& model,
                                                           const Tensor& X,
                                                           double threshold) {
    if (X.shape.empty() || X.shape[0] == 0) throw std::domain_error("prune_and_reassign: empty X");
    if (!(threshold > 0.0) || !(threshold < 1.0))
        throw std::domain_error("prune_and_reassign: threshold must lie in (0,1)");
    const int n = X.shape[0];
    const std::vector<int> active = model.active_indices();
    const std::vector<int> assign = hard_assign(model, X);

    std::vector<int> counts(active.size(), 0);
    for (int a : assign) counts[a]++;
    int largest = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[largest]) largest = static_cast<int>(c);

    DpGmmModel pruned = model;
    double wsum = 0.0;
    for (std::size_t c = 0; c < active.size(); ++c) {
        const bool keep =
            (static_cast<double>(counts[c]) / n >= threshold) || static_cast<int>(c) == largest;
        pruned.active_mask[active[c]] = keep ? 1 : 0;
        if (!keep) pruned.weights[active[c]] = 0.0;
    }
    for (int t = 0; t < pruned.Ttrunc; ++t)
        if (pruned.active_mask[t]) wsum += pruned.weights[t];
    for (int t = 0; t < pruned.Ttrunc; ++t)
        if (pruned.active_mask[t]) pruned.weights[t] /= wsum;

    return {pruned, hard_assign(pruned, X)};
}

void save_dpgmm(const DpGmmModel& model, const std::string& path) {
    json j;
    j["format_version"] = 1;
    j["Ttrunc"] = model.Ttrunc;
    j["d"] = model.d;
    j["weights"] = model.weights;
    j["means"] = model.means.data;
    j["variances"] = model.variances.data;
    j["gamma1"] = model.sticks.gamma1;
    j["gamma2"] = model.sticks.gamma2;
    j["active_mask"] = model.active_mask;
    j["elbo_trace"] = model.elbo_trace;
    j["prior"] = {{"alpha0", model.prior.alpha0}, {"m0", model.prior.m0},
                  {"kappa0", model.prior.kappa0}, {"a0", model.prior.a0},
                  {"b0", model.prior.b0}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

DpGmmModel load_dpgmm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j;
    in >> j;
    DpGmmModel model;
    model.Ttrunc = j.at("Ttrunc").get<int>();
    model.d = j.at("d").get<int>();
    model.weights = j.at("weights").get<std::vector<double>>();
    model.means = Tensor({model.Ttrunc, model.d});
    model.means.data = j.at("means").get<std::vector<double>>();
    model.variances = Tensor({model.Ttrunc, model.d});
    model.variances.data = j.at("variances").get<std::vector<double>>();
    model.sticks.gamma1 = j.at("gamma1").get<std::vector<double>>();
    model.sticks.gamma2 = j.at("gamma2").get<std::vector<double>>();
    model.active_mask = j.at("active_mask").get<std::vector<std::uint8_t>>();
    model.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    const auto& p = j.at("prior");
    model.prior.alpha0 = p.at("alpha0").get<double>();
    model.prior.m0 = p.at("m0").get<std::vector<double>>();
    model.prior.kappa0 = p.at("kappa0").get<double>();
    model.prior.a0 = p.at("a0").get<double>();
    model.prior.b0 = p.at("b0").get<std::vector<double>>();
    return model;
}

}  // namespace nhnn
