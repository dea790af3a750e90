#pragma once

#include <concepts>
#include <span>

#include "smcvar/rng.hpp"

namespace smcvar {

/// Contract every filtering/smoothing routine in this library consumes:
/// an initial sampler, a Markov transition (sampler + density, describing
/// the same kernel) and a strictly positive, bounded potential. The time
/// index passed to `trans_*` is the index of the state being reached, and
/// the one passed to `potential` is the index of the state being weighted.
template <class M>
concept StateModel = requires(const M m, RngStream& rng,
                              const typename M::State& x, int t) {
    typename M::State;
    { m.init_sample(rng) } -> std::same_as<typename M::State>;
    { m.trans_sample(rng, x, t) } -> std::same_as<typename M::State>;
    { m.trans_density(x, x, t) } -> std::convertible_to<double>;
    { m.potential(x, t) } -> std::convertible_to<double>;
};

/// Optional hook: evaluate m_t(prev[j], x) for a whole row of previous
/// states at once. Backward-weight assembly calls this when available.
template <class M>
concept BatchedDensityModel = StateModel<M> &&
    requires(const M m, std::span<const typename M::State> prev,
             const typename M::State& x, int t, std::span<double> out) {
        m.trans_density_row(prev, x, t, out);
    };

template <StateModel M>
void transition_density_row(const M& model,
                            std::span<const typename M::State> prev,
                            const typename M::State& x, int t,
                            std::span<double> out) {
    if constexpr (BatchedDensityModel<M>) {
        model.trans_density_row(prev, x, t, out);
    } else {
        for (std::size_t j = 0; j < prev.size(); ++j) {
            out[j] = model.trans_density(prev[j], x, t);
        }
    }
}

}  // namespace smcvar
