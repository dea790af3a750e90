#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "smcvar/parallel.hpp"
#include "smcvar/particle_filter.hpp"

namespace smcvar {

/// Finite-state instantiation of the model contract, with per-step
/// potential vectors supplied directly (observations pre-baked) so every
/// exact computation below is deterministic.
struct DiscreteHmm {
    using State = int;
    static constexpr int state_dim = 1;

    Vector init;                     // simplex over K states
    Matrix trans;                    // K x K row-stochastic
    std::vector<Vector> potentials;  // potentials[t][k] > 0

    int num_states() const { return static_cast<int>(init.size()); }

    int init_sample(RngStream& rng) const { return sample_from(init, rng); }
    double init_logdensity(int x) const { return std::log(init[x]); }
    int trans_sample(RngStream& rng, int x, int) const {
        // trans rows are short; a linear CDF scan beats precomputation here.
        return sample_from(trans.row(x), rng);
    }
    double trans_density(int x_prev, int x_next, int) const { return trans(x_prev, x_next); }
    double potential(int x, int t) const { return potentials.at(t)[x]; }

    template <class Row>
    static int sample_from(const Row& probs, RngStream& rng) {
        double u = rng.uniform();
        const int k = static_cast<int>(probs.size());
        for (int i = 0; i < k; ++i) {
            u -= probs[i];
            if (u <= 0.0) return i;
        }
        return k - 1;
    }

    void validate() const {
        const int k = num_states();
        if (std::abs(init.sum() - 1.0) > 1e-12) throw std::invalid_argument("DiscreteHmm: init not a simplex");
        for (int i = 0; i < k; ++i) {
            if (std::abs(trans.row(i).sum() - 1.0) > 1e-12) {
                throw std::invalid_argument("DiscreteHmm: transition row does not sum to 1");
            }
        }
        for (const auto& g : potentials) {
            if (g.minCoeff() <= 0.0) throw std::invalid_argument("DiscreteHmm: potentials must be positive");
        }
    }
};

/// gamma_t as a K-vector: gamma_0 = init, gamma_{s+1} = trans' (gamma_s .* g_s).
inline Vector exact_gamma_vector(const DiscreteHmm& hmm, int t) {
    Vector gamma = hmm.init;
    for (int s = 0; s < t; ++s) {
        gamma = hmm.trans.transpose() * gamma.cwiseProduct(hmm.potentials.at(s));
    }
    return gamma;
}

inline double exact_gamma(const DiscreteHmm& hmm, int t, const Vector& h) {
    return exact_gamma_vector(hmm, t).dot(h);
}

inline double exact_eta(const DiscreteHmm& hmm, int t, const Vector& h) {
    const Vector gamma = exact_gamma_vector(hmm, t);
    return gamma.dot(h) / gamma.sum();
}

inline double exact_phi(const DiscreteHmm& hmm, int t, const Vector& h) {
    const Vector gamma = exact_gamma_vector(hmm, t);
    const Vector weighted = gamma.cwiseProduct(hmm.potentials.at(t));
    return weighted.dot(h) / weighted.sum();
}

/// Marginal kernel applied to h: x_s -> Qbar_{s+1:t}[h](x_s), computed by
/// the backward sweep w_r = g_r .* (trans w_{r+1}).
inline Vector exact_qbar(const DiscreteHmm& hmm, int s, int t, const Vector& h) {
    Vector w = h;
    for (int r = t - 1; r >= s; --r) {
        w = hmm.potentials.at(r).cwiseProduct(hmm.trans * w);
    }
    return w;
}

enum class VarianceTarget { Gamma, Eta, Phi };

/// Exact asymptotic variance of the particle estimator of gamma_t(h),
/// eta_t(h) or phi_t(h): the displayed sum over s = 0..t.
inline double exact_asym_var(const DiscreteHmm& hmm, int t, const Vector& h,
                             VarianceTarget target) {
    Vector terminal = h;
    double normalizer = 1.0;
    if (target == VarianceTarget::Eta) {
        terminal.array() -= exact_eta(hmm, t, h);
        const double gamma1 = exact_gamma_vector(hmm, t).sum();
        normalizer = gamma1 * gamma1;
    } else if (target == VarianceTarget::Phi) {
        terminal.array() -= exact_phi(hmm, t, h);
        terminal = hmm.potentials.at(t).cwiseProduct(terminal);
        const Vector gamma_t = exact_gamma_vector(hmm, t);
        const double gamma_next = gamma_t.dot(hmm.potentials.at(t));
        normalizer = gamma_next * gamma_next;
    }
    const double gamma_h = exact_gamma(hmm, t, terminal);
    double total = 0.0;
    for (int s = 0; s <= t; ++s) {
        const Vector gamma_s = exact_gamma_vector(hmm, s);
        const Vector qbar = exact_qbar(hmm, s, t, terminal);
        total += gamma_s.sum() * gamma_s.dot(qbar.cwiseAbs2()) - gamma_h * gamma_h;
    }
    return total / normalizer;
}

/// Exact mu_{b,t}(h (x) f): the doubled Feynman-Kac chain moves
/// independently where the mask is 0 and coupled where it is 1.
inline double exact_mu(const DiscreteHmm& hmm, const std::vector<unsigned char>& mask, int t,
                       const Vector& h, const Vector& f) {
    if (static_cast<int>(mask.size()) != t + 1) {
        throw std::invalid_argument("exact_mu: mask length must be t + 1");
    }
    const int k = hmm.num_states();
    Matrix u(k, k);
    if (mask[0] == 0) {
        u = hmm.init * hmm.init.transpose();
    } else {
        u = hmm.init.asDiagonal();
    }
    for (int s = 1; s <= t; ++s) {
        const Vector& g = hmm.potentials.at(s - 1);
        const Matrix v = u.cwiseProduct(g * g.transpose());
        if (mask[s] == 0) {
            u = hmm.trans.transpose() * v * hmm.trans;
        } else {
            const Vector collapsed = hmm.trans.transpose() * (v * Vector::Ones(k));
            u = collapsed.asDiagonal();
        }
    }
    return h.dot(u * f);
}

struct ReplicationResult {
    double estimate = 0.0;  // N x sample variance of the replicated estimates
    double stderr_jack = 0.0;
};

/// N x (unbiased sample variance) with a jackknife standard error, from
/// a vector of independent replicate estimates.
inline ReplicationResult scaled_variance_with_jackknife(const Vector& values, double n_particles) {
    const int r = static_cast<int>(values.size());
    if (r < 2) throw std::invalid_argument("replication variance: requires R >= 2");
    const double mean = values.mean();
    const double ss = (values.array() - mean).square().sum();
    ReplicationResult out;
    out.estimate = n_particles * ss / (r - 1);
    if (r < 3) return out;
    // Leave-one-out sums of squares in closed form.
    Vector loo(r);
    for (int i = 0; i < r; ++i) {
        const double d = values[i] - mean;
        const double ss_i = ss - d * d * r / (r - 1.0);
        loo[i] = n_particles * ss_i / (r - 2);
    }
    const double loo_mean = loo.mean();
    out.stderr_jack = std::sqrt((r - 1.0) / r * (loo.array() - loo_mean).square().sum());
    return out;
}

/// Brute-force asymptotic-variance reference: R independent filter runs,
/// N x sample variance of the chosen estimate at time t.
template <StateModel M, class H>
ReplicationResult replication_variance(const M& model, int t, H&& h, int num_particles,
                                       int replicates, const RngStream& base,
                                       VarianceTarget target = VarianceTarget::Eta) {
    if (replicates < 2) throw std::invalid_argument("replication_variance: requires R >= 2");
    Vector values(replicates);
    parallel_for(replicates, [&](int r) {
        RngStream rng = base.child(r);
        FilterState<M> state = filter_init(model, num_particles, rng);
        for (int s = 0; s < t; ++s) state = filter_step(state, model, rng);
        switch (target) {
            case VarianceTarget::Gamma:
                values[r] = std::exp(state.log_gamma1) * predictor_estimate(state, h);
                break;
            case VarianceTarget::Eta:
                values[r] = predictor_estimate(state, h);
                break;
            case VarianceTarget::Phi:
                values[r] = filter_estimate(state, h);
                break;
        }
    });
    return scaled_variance_with_jackknife(values, static_cast<double>(num_particles));
}

/// Reference curve over t = 0..horizon: one filter run per replicate,
/// recording the predictor estimate at every step.
template <StateModel M, class H>
std::vector<ReplicationResult> replication_curve(const M& model, int horizon, H&& h,
                                                 int num_particles, int replicates,
                                                 const RngStream& base) {
    Matrix estimates(replicates, horizon + 1);
    parallel_for(replicates, [&](int r) {
        RngStream rng = base.child(r);
        FilterState<M> state = filter_init(model, num_particles, rng);
        estimates(r, 0) = predictor_estimate(state, h);
        for (int s = 1; s <= horizon; ++s) {
            state = filter_step(state, model, rng);
            estimates(r, s) = predictor_estimate(state, h);
        }
    });
    std::vector<ReplicationResult> curve(horizon + 1);
    for (int s = 0; s <= horizon; ++s) {
        curve[s] = scaled_variance_with_jackknife(estimates.col(s), double(num_particles));
    }
    return curve;
}

}  // namespace smcvar
