#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "smcvar/model.hpp"
#include "smcvar/rng.hpp"

namespace smcvar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = Eigen::VectorXi;

/// N i.i.d. categorical draws from `norm_weights`. Returned indices are
/// 0-based. Throws on all-zero or non-finite weight vectors.
inline IndexVector multinomial_resample(RngStream& rng, const Vector& norm_weights) {
    const Eigen::Index n = norm_weights.size();
    Vector cumulative(n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = norm_weights[i];
        if (!std::isfinite(w) || w < 0.0) {
            throw std::runtime_error("multinomial_resample: degenerate weights");
        }
        acc += w;
        cumulative[i] = acc;
    }
    if (acc <= 0.0) {
        throw std::runtime_error("multinomial_resample: degenerate weights");
    }
    IndexVector indices(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = rng.uniform() * acc;
        const double* begin = cumulative.data();
        const double* it = std::lower_bound(begin, begin + n, u);
        indices[i] = static_cast<int>(std::min<Eigen::Index>(it - begin, n - 1));
    }
    return indices;
}

/// One time-slice of a bootstrap particle filter, together with the
/// genealogy bookkeeping needed by the variance estimators: Eve indices
/// (time-0 ancestors) and a ring of lagged ancestor columns of capacity
/// `lag_capacity`.
template <StateModel M>
struct FilterState {
    using State = typename M::State;

    int t = 0;
    std::vector<State> particles;
    Vector weights;       // omega^i_t = g_t(xi^i_t)
    Vector norm_weights;  // W^i_t
    double omega_sum = 0.0;
    double log_gamma1 = 0.0;  // log gamma_t^N(1) = sum_{s<t} log(Omega_s / N)
    IndexVector ancestors;    // A^i_{t-1}; empty at t = 0
    IndexVector eve;          // E^i_{t,0}
    std::vector<IndexVector> enoch_ring;  // enoch_ring[l][i] = E^i_{t,t-l}, l = 0..lag_capacity
    int lag_capacity = 0;

    int size() const { return static_cast<int>(particles.size()); }
};

namespace detail {

template <StateModel M>
void weigh_particles(FilterState<M>& state, const M& model) {
    const int n = state.size();
    state.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        const double g = model.potential(state.particles[i], state.t);
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw std::runtime_error("filter: potential must be positive and finite");
        }
        state.weights[i] = g;
    }
    state.omega_sum = state.weights.sum();
    state.norm_weights = state.weights / state.omega_sum;
}

}  // namespace detail

template <StateModel M>
FilterState<M> filter_init(const M& model, int num_particles, RngStream& rng,
                           int lag_capacity = 0) {
    if (num_particles < 1) throw std::invalid_argument("filter_init: N must be >= 1");
    if (lag_capacity < 0) throw std::invalid_argument("filter_init: negative lag capacity");
    FilterState<M> state;
    state.t = 0;
    state.lag_capacity = lag_capacity;
    state.particles.reserve(num_particles);
    for (int i = 0; i < num_particles; ++i) {
        state.particles.push_back(model.init_sample(rng));
    }
    detail::weigh_particles(state, model);
    state.eve = IndexVector::LinSpaced(num_particles, 0, num_particles - 1);
    state.enoch_ring.assign(1, state.eve);
    return state;
}

/// Advance the filter one step: multinomial resampling, Markov
/// propagation, reweighing, and genealogy updates. RNG consumption order
/// is fixed (N ancestor draws, then N transition draws) so each particle
/// depends only on its own ancestor and transition randomness.
template <StateModel M>
FilterState<M> filter_step(const FilterState<M>& state, const M& model, RngStream& rng) {
    const int n = state.size();
    FilterState<M> next;
    next.t = state.t + 1;
    next.lag_capacity = state.lag_capacity;
    next.ancestors = multinomial_resample(rng, state.norm_weights);
    next.particles.reserve(n);
    for (int i = 0; i < n; ++i) {
        next.particles.push_back(
            model.trans_sample(rng, state.particles[next.ancestors[i]], next.t));
    }
    detail::weigh_particles(next, model);
    next.log_gamma1 =
        state.log_gamma1 + std::log(state.omega_sum / static_cast<double>(n));

    next.eve.resize(n);
    for (int i = 0; i < n; ++i) next.eve[i] = state.eve[next.ancestors[i]];

    const int depth = std::min(next.t, next.lag_capacity);
    next.enoch_ring.resize(depth + 1);
    next.enoch_ring[0] = IndexVector::LinSpaced(n, 0, n - 1);
    for (int lag = 1; lag <= depth; ++lag) {
        IndexVector col(n);
        for (int i = 0; i < n; ++i) col[i] = state.enoch_ring[lag - 1][next.ancestors[i]];
        next.enoch_ring[lag] = std::move(col);
    }
    return next;
}

/// eta_t^N(h): plain particle average.
template <StateModel M, class H>
double predictor_estimate(const FilterState<M>& state, H&& h) {
    double acc = 0.0;
    for (const auto& x : state.particles) acc += h(x);
    return acc / static_cast<double>(state.size());
}

/// phi_t^N(h): potential-weighted average.
template <StateModel M, class H>
double filter_estimate(const FilterState<M>& state, H&& h) {
    double acc = 0.0;
    for (int i = 0; i < state.size(); ++i) acc += state.norm_weights[i] * h(state.particles[i]);
    return acc;
}

template <StateModel M, class H>
Vector apply(const FilterState<M>& state, H&& h) {
    Vector values(state.size());
    for (int i = 0; i < state.size(); ++i) values[i] = h(state.particles[i]);
    return values;
}

}  // namespace smcvar
