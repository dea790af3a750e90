#pragma once

#include <vector>

#include "smcvar/backward.hpp"
#include "smcvar/oracle.hpp"

namespace smcvar::test {

/// Random K-state model with positive potentials, for oracle-backed checks.
inline DiscreteHmm random_hmm(RngStream& rng, int k, int horizon) {
    DiscreteHmm hmm;
    hmm.init.resize(k);
    for (int i = 0; i < k; ++i) hmm.init[i] = 0.2 + rng.uniform();
    hmm.init /= hmm.init.sum();
    hmm.trans.resize(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) hmm.trans(i, j) = 0.2 + rng.uniform();
        hmm.trans.row(i) /= hmm.trans.row(i).sum();
    }
    for (int t = 0; t <= horizon; ++t) {
        Vector g(k);
        for (int i = 0; i < k; ++i) g[i] = 0.3 + rng.uniform();
        hmm.potentials.push_back(g);
    }
    return hmm;
}

inline Vector random_test_function(RngStream& rng, int k) {
    Vector h(k);
    for (int i = 0; i < k; ++i) h[i] = -1.0 + 2.0 * rng.uniform();
    return h;
}

/// Short filter run that keeps the per-step backward matrices and
/// weights, as needed by the masked-recursion checks.
template <StateModel M>
struct RecordedRun {
    std::vector<FilterState<M>> states;
    BackwardRunRecord record;
    std::vector<IndexVector> ancestors;     // ancestors[s-1] drawn at step s
    std::vector<Vector> prev_norm_weights;  // weights at s-1
};

template <StateModel M>
RecordedRun<M> run_recorded(const M& model, int n, int horizon, RngStream& rng,
                            int lag_capacity = 0) {
    RecordedRun<M> run;
    run.states.push_back(filter_init(model, n, rng, lag_capacity));
    for (int s = 1; s <= horizon; ++s) {
        const auto& prev = run.states.back();
        FilterState<M> next = filter_step(prev, model, rng);
        const BackwardMatrix bw =
            backward_matrix(prev, std::span<const typename M::State>(next.particles), model);
        run.record.push(bw, prev.norm_weights);
        run.ancestors.push_back(next.ancestors);
        run.prev_norm_weights.push_back(prev.norm_weights);
        run.states.push_back(std::move(next));
    }
    return run;
}

inline std::vector<unsigned char> mask_from_bits(std::size_t bits, int len) {
    std::vector<unsigned char> mask(len);
    for (int s = 0; s < len; ++s) mask[s] = (bits >> s) & 1u;
    return mask;
}

}  // namespace smcvar::test
