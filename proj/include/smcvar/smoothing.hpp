#pragma once

#include <cmath>
#include <stdexcept>

#include "smcvar/backward.hpp"

namespace smcvar {

/// Forward-only FFBS tracker for a marginal test function h_l: carries
/// the per-particle backward statistics T_t^N[h_l] and the current
/// smoothed estimate of Q_{l|t}(h_l).
struct FfbsMarginal {
    int t = 0;
    int ell = 0;
    Vector tstat;
    double smoothed = 0.0;
};

template <StateModel M, class H>
FfbsMarginal ffbs_marginal_init(const FilterState<M>& state, H&& h) {
    FfbsMarginal f;
    f.t = state.t;
    f.ell = state.t;
    f.tstat = apply(state, h);
    f.smoothed = state.norm_weights.dot(f.tstat);
    return f;
}

/// T_{t+1}(k) = sum_i beta(k, i) T_t(i): each statistic is a convex
/// combination of the previous ones.
inline void ffbs_marginal_update(FfbsMarginal& f, const BackwardMatrix& bw,
                                 const Vector& new_norm_weights) {
    if (bw.beta.cols() != f.tstat.size()) {
        throw std::invalid_argument("ffbs_marginal_update: dimension mismatch");
    }
    f.tstat = bw.beta * f.tstat;
    f.smoothed = new_norm_weights.dot(f.tstat);
    ++f.t;
}

/// General additive-functional step: T_{t+1}(k) = sum_i beta(k, i)
/// { T_t(i) + pair_term(i, k) } with pair_term(i, k) the fresh increment
/// evaluated at (previous particle i, current particle k).
template <class PairTerm>
Vector ffbs_additive_update(const Vector& tstat, const BackwardMatrix& bw, PairTerm&& pair_term) {
    const int n = static_cast<int>(bw.beta.rows());
    if (bw.beta.cols() != tstat.size()) {
        throw std::invalid_argument("ffbs_additive_update: dimension mismatch");
    }
    Vector next(n);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < static_cast<int>(tstat.size()); ++i) {
            acc += bw.beta(k, i) * (tstat[i] + pair_term(i, k));
        }
        next[k] = acc;
    }
    return next;
}

/// Statistics behind the marginal-smoothing variance estimator. s1 and
/// s2 aggregate the squared and cross terms of the backward statistics;
/// s mirrors the aggregate of the backward module for the same step.
struct SmoothingStats {
    int t = 0;
    int ell = 0;
    FfbsMarginal ffbs;
    Matrix s1;
    Matrix s2;
    Matrix s;

    double smoothed() const { return ffbs.smoothed; }
};

/// Start tracking at t = ell; requires backward statistics synced to the
/// same step. At initialization S1 = S (.) (T T'), S2 = S (.) (T (+) T').
template <StateModel M, class H>
SmoothingStats smoothing_init(const FilterState<M>& state, H&& h, const BsStats& backward_stats) {
    if (backward_stats.t != state.t) {
        throw std::invalid_argument("smoothing_init: step mismatch");
    }
    SmoothingStats stats;
    stats.t = state.t;
    stats.ell = state.t;
    stats.ffbs = ffbs_marginal_init(state, h);
    const Vector& tv = stats.ffbs.tstat;
    stats.s1 = backward_stats.s.cwiseProduct(tv * tv.transpose());
    stats.s2 = backward_stats.s.cwiseProduct(
        (tv.replicate(1, tv.size()) + tv.transpose().replicate(tv.size(), 1)));
    stats.s = backward_stats.s;
    return stats;
}

/// One synchronized step: propagate the FFBS statistics with the fresh
/// backward matrix, then fold them into S1/S2 together with the new
/// one-meeting diagonal from the backward module. `backward_stats` must
/// already be advanced to the new step.
inline void smoothing_var_update(SmoothingStats& stats, const BackwardMatrix& bw,
                                 const Vector& new_norm_weights, const BsStats& backward_stats) {
    if (backward_stats.t != stats.t + 1) {
        throw std::invalid_argument("smoothing_var_update: step mismatch");
    }
    ffbs_marginal_update(stats.ffbs, bw, new_norm_weights);
    const Vector& tv = stats.ffbs.tstat;

    Matrix next1 = bw.beta * stats.s1 * bw.beta.transpose();
    next1.diagonal() = backward_stats.tes_diag.cwiseProduct(tv.cwiseProduct(tv));
    stats.s1 = std::move(next1);

    Matrix next2 = bw.beta * stats.s2 * bw.beta.transpose();
    next2.diagonal() = 2.0 * backward_stats.tes_diag.cwiseProduct(tv);
    stats.s2 = std::move(next2);

    stats.s = backward_stats.s;
    ++stats.t;
}

/// Asymptotic-variance estimate of the FFBS marginal-smoothing estimator
/// at the current step.
template <StateModel M>
double smoothing_variance(const SmoothingStats& stats, const FilterState<M>& state) {
    const int n = state.size();
    detail::require_synced(stats.t, state.t, n, "smoothing_variance");
    const double q = stats.smoothed();
    const Matrix sbar = stats.s1 - q * stats.s2 + q * q * stats.s;
    const double quad = state.norm_weights.dot(sbar * state.norm_weights);
    const int t = state.t;
    const double log_pref = (t + 1) * std::log(double(n)) - t * std::log(double(n - 1));
    return std::exp(log_pref) * quad;
}

}  // namespace smcvar
