#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "smcvar/particle_filter.hpp"

namespace smcvar {

namespace detail {

// Class-sum form of the genealogy variance estimators: the double sum
// over pairs with distinct ancestors collapses to N^{-1} sum_k c_k^2
// with c_k the centered h-mass of ancestor class k. O(N) instead of
// O(N^2), and nonnegative by construction.
inline double genealogy_class_sum(const IndexVector& labels, const Vector& h_values) {
    const Eigen::Index n = h_values.size();
    const double mean = h_values.mean();
    Vector class_mass = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) class_mass[labels[i]] += h_values[i] - mean;
    return class_mass.squaredNorm() / static_cast<double>(n);
}

}  // namespace detail

/// Genealogy-based estimator of the predictor asymptotic variance,
/// computed from the Eve indices. Collapses to zero once every lineage
/// shares the same time-0 ancestor.
template <StateModel M, class H>
double cle_variance(const FilterState<M>& state, H&& h) {
    if (state.size() < 2) throw std::invalid_argument("cle_variance: requires N >= 2");
    return detail::genealogy_class_sum(state.eve, apply(state, h));
}

/// Fixed-lag truncation: ancestors are traced back `lag` steps only.
template <StateModel M, class H>
double lag_variance(const FilterState<M>& state, H&& h, int lag) {
    if (state.size() < 2) throw std::invalid_argument("lag_variance: requires N >= 2");
    if (lag < 0) throw std::invalid_argument("lag_variance: negative lag");
    if (lag > state.t) throw std::invalid_argument("lag_variance: lag exceeds current time");
    if (lag > state.lag_capacity) throw std::invalid_argument("lag_variance: ring capacity exceeded");
    return detail::genealogy_class_sum(state.enoch_ring[lag], apply(state, h));
}

/// Fraction of particle pairs with distinct time-0 ancestors.
template <StateModel M>
double gt_disjoint_fraction(const FilterState<M>& state) {
    const int n = state.size();
    std::vector<int> count(n, 0);
    for (int i = 0; i < n; ++i) ++count[state.eve[i]];
    double same = 0.0;
    for (int k = 0; k < n; ++k) same += static_cast<double>(count[k]) * count[k];
    const double nn = static_cast<double>(n);
    return (nn * nn - same) / (nn * (nn - 1.0));
}

/// Online statistics for the genealogy-tracing term-by-term estimator:
/// the ancestral counterpart of the backward-sampling T/S recursions.
struct GtStats {
    int t = 0;
    Matrix t0;      // binary, zero diagonal
    Matrix s;       // aggregate over s of the e_s statistics

    static GtStats init(int n) {
        GtStats stats;
        stats.t0 = Matrix::Ones(n, n) - Matrix::Identity(n, n);
        stats.s = Matrix::Identity(n, n);
        return stats;
    }
};

template <StateModel M>
GtStats gt_tbt_update(const GtStats& stats, const FilterState<M>& state,
                      const Vector& prev_norm_weights) {
    const int n = state.size();
    if (stats.t0.rows() != n) throw std::invalid_argument("gt_tbt_update: dimension mismatch");
    if (state.ancestors.size() != n) throw std::invalid_argument("gt_tbt_update: state has no ancestors");
    GtStats next;
    next.t = stats.t + 1;
    next.t0.resize(n, n);
    next.s.resize(n, n);
    const Vector coupled = stats.t0 * prev_norm_weights;  // sum_j W^j T0(a, j)
    for (int k = 0; k < n; ++k) {
        const int ak = state.ancestors[k];
        for (int l = 0; l < n; ++l) {
            if (k == l) {
                next.t0(k, l) = 0.0;
                next.s(k, l) = coupled[ak];
            } else {
                const int al = state.ancestors[l];
                next.t0(k, l) = stats.t0(ak, al);
                next.s(k, l) = stats.s(ak, al);
            }
        }
    }
    return next;
}

/// Term-by-term estimator of the gamma-measure asymptotic variance from
/// ancestral statistics; mirrors the backward-sampling expression with
/// the same prefactor, assembled in log space.
template <StateModel M, class H>
double gt_tbt_variance(const GtStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    if (n < 2) throw std::invalid_argument("gt_tbt_variance: requires N >= 2");
    if (stats.t != state.t) throw std::invalid_argument("gt_tbt_variance: step mismatch");
    const Vector hv = apply(state, h);
    const int t = state.t;
    const Matrix combined = stats.s - (static_cast<double>(t + 1) / (n - 1)) * stats.t0;
    const double quad = hv.dot(combined * hv);
    const double log_pref = 2.0 * state.log_gamma1 + (t - 1) * std::log(double(n)) -
                            t * std::log(double(n - 1));
    return std::exp(log_pref) * quad;
}

/// Predictor-variance version: gamma factors cancel against the centered
/// test function, leaving a pure N-dependent prefactor.
template <StateModel M, class H>
double gt_tbt_var_eta(const GtStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    if (n < 2) throw std::invalid_argument("gt_tbt_var_eta: requires N >= 2");
    if (stats.t != state.t) throw std::invalid_argument("gt_tbt_var_eta: step mismatch");
    Vector hv = apply(state, h);
    hv.array() -= hv.mean();
    const int t = state.t;
    const Matrix combined = stats.s - (static_cast<double>(t + 1) / (n - 1)) * stats.t0;
    const double quad = hv.dot(combined * hv);
    const double log_pref = (t - 1) * std::log(double(n)) - t * std::log(double(n - 1));
    return std::exp(log_pref) * quad;
}

/// Masked ancestral statistic T^b for an arbitrary coupling mask; used by
/// identity and unbiasedness checks. `ancestors[s]` and `weights[s]` are
/// the ancestor indices drawn at step s+1 and the normalized weights at
/// step s, for s = 0..t-1.
inline Matrix gt_masked_statistic(const std::vector<unsigned char>& mask,
                                  const std::vector<IndexVector>& ancestors,
                                  const std::vector<Vector>& weights, int n) {
    const int t = static_cast<int>(mask.size()) - 1;
    Matrix stat(n, n);
    if (mask[0] == 0) {
        stat = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    } else {
        stat = Matrix::Identity(n, n);
    }
    for (int s = 1; s <= t; ++s) {
        const IndexVector& anc = ancestors[s - 1];
        Matrix next(n, n);
        if (mask[s] == 0) {
            for (int k = 0; k < n; ++k) {
                for (int l = 0; l < n; ++l) {
                    next(k, l) = (k == l) ? 0.0 : stat(anc[k], anc[l]);
                }
            }
        } else {
            const Vector coupled = stat * weights[s - 1];
            next.setZero();
            for (int k = 0; k < n; ++k) next(k, k) = coupled[anc[k]];
        }
        stat = next;
    }
    return stat;
}

}  // namespace smcvar
