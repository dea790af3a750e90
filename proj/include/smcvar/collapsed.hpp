#pragma once

#include <cmath>
#include <stdexcept>

#include "smcvar/oracle.hpp"

namespace smcvar {

/// On a finite state space the backward matrix has only K distinct rows
/// and columns, so the N x N disjointness statistic factors exactly
/// through state classes: T0_t(i, j) = 1_{i != j} A_t(c_i, c_j) with a
/// K x K class matrix A_t. Updates cost O(K^3) instead of O(N^3) and
/// reproduce the dense recursion bit-for-bit in exact arithmetic.
struct CollapsedBsStats {
    int t = 0;
    Matrix a_hat;  // K x K, symmetric

    static CollapsedBsStats init(int k) {
        CollapsedBsStats stats;
        stats.a_hat = Matrix::Ones(k, k);
        return stats;
    }
};

/// Class-level backward matrix: beta_hat(x, b) proportional to
/// g_{t-1}(b) m(b, x), normalized over previous classes with counts.
inline Matrix collapsed_backward_matrix(const DiscreteHmm& hmm, const Vector& prev_class_counts,
                                        int t) {
    const int k = hmm.num_states();
    const Vector& g_prev = hmm.potentials.at(t - 1);
    Matrix beta_hat(k, k);
    for (int x = 0; x < k; ++x) {
        double denom = 0.0;
        for (int b = 0; b < k; ++b) {
            const double v = g_prev[b] * hmm.trans(b, x);
            beta_hat(x, b) = v;
            denom += prev_class_counts[b] * v;
        }
        if (denom <= 0.0) throw std::runtime_error("collapsed_backward_matrix: backward kernel undefined");
        beta_hat.row(x) /= denom;
    }
    return beta_hat;
}

/// Pair-count weighting: counts(a) counts(b) pairs of distinct particles
/// across classes, minus the diagonal double counting.
inline Matrix pair_counts(const Vector& counts) {
    Matrix p = counts * counts.transpose();
    p.diagonal() -= counts;
    return p;
}

inline CollapsedBsStats collapsed_bs_update(const CollapsedBsStats& stats,
                                            const Matrix& beta_hat,
                                            const Vector& prev_class_counts) {
    CollapsedBsStats next;
    next.t = stats.t + 1;
    const Matrix weighted = stats.a_hat.cwiseProduct(pair_counts(prev_class_counts));
    next.a_hat = beta_hat * weighted * beta_hat.transpose();
    return next;
}

/// Predictor-variance estimator evaluated from class statistics; equals
/// bs_var_eta on the dense path for the same particle system.
inline double collapsed_bs_var_eta(const CollapsedBsStats& stats, const Vector& class_counts,
                                   const Vector& h_by_class, int num_particles) {
    const int n = num_particles;
    if (n < 2) throw std::invalid_argument("collapsed_bs_var_eta: requires N >= 2");
    const double eta = class_counts.dot(h_by_class) / n;
    const Vector centered = h_by_class.array() - eta;
    const Matrix quad_weights = stats.a_hat.cwiseProduct(pair_counts(class_counts));
    const double quad = centered.dot(quad_weights * centered);
    const int t = stats.t;
    const double log_pref = t * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return -std::exp(log_pref) * quad;
}

/// Gamma-measure counterpart; log_gamma1 is the filter's running log
/// normalizer at the same step.
inline double collapsed_bs_var_gamma(const CollapsedBsStats& stats, const Vector& class_counts,
                                     const Vector& h_by_class, int num_particles,
                                     double log_gamma1) {
    const int n = num_particles;
    if (n < 2) throw std::invalid_argument("collapsed_bs_var_gamma: requires N >= 2");
    const double eta = class_counts.dot(h_by_class) / n;
    const Matrix quad_weights = stats.a_hat.cwiseProduct(pair_counts(class_counts));
    const double quad = h_by_class.dot(quad_weights * h_by_class);
    const int t = stats.t;
    const double log_ratio = t * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return std::exp(2.0 * log_gamma1) * (n * eta * eta - std::exp(log_ratio) * quad);
}

inline double collapsed_bs_disjoint_fraction(const CollapsedBsStats& stats,
                                             const Vector& class_counts, int num_particles) {
    const double n = static_cast<double>(num_particles);
    return stats.a_hat.cwiseProduct(pair_counts(class_counts)).sum() / (n * (n - 1.0));
}

/// Count particles per state.
inline Vector class_counts(const std::vector<int>& particles, int k) {
    Vector counts = Vector::Zero(k);
    for (int x : particles) counts[x] += 1.0;
    return counts;
}

}  // namespace smcvar
