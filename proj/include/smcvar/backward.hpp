#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcvar/particle_filter.hpp"

namespace smcvar {

/// Row-stochastic matrix of backward weights: beta(k, l) is the
/// probability that particle l at time t-1 is the backward-sampled
/// parent of particle k at time t.
struct BackwardMatrix {
    Matrix beta;
    int rows() const { return static_cast<int>(beta.rows()); }
};

template <StateModel M>
BackwardMatrix backward_matrix(const FilterState<M>& prev,
                               std::span<const typename M::State> curr_particles,
                               const M& model) {
    const int n = prev.size();
    const int rows = static_cast<int>(curr_particles.size());
    const int t = prev.t + 1;
    BackwardMatrix bw;
    bw.beta.resize(rows, n);
    std::vector<double> row(n);
    for (int k = 0; k < rows; ++k) {
        transition_density_row<M>(model, std::span<const typename M::State>(prev.particles),
                                  curr_particles[k], t, row);
        double denom = 0.0;
        for (int l = 0; l < n; ++l) {
            const double v = prev.weights[l] * row[l];
            if (!std::isfinite(v) || v < 0.0) {
                throw std::runtime_error("backward_matrix: invalid transition density");
            }
            bw.beta(k, l) = v;
            denom += v;
        }
        if (denom <= 0.0) {
            throw std::runtime_error("backward_matrix: backward kernel undefined");
        }
        bw.beta.row(k) /= denom;
    }
    return bw;
}

/// Coalescence statistics propagated online. t0(i, j) is the conditional
/// probability that backward trajectories started from particles i and j
/// at time t are disjoint at every step; s aggregates the one-meeting
/// statistics over all meeting times.
struct BsStats {
    int t = 0;
    Matrix t0;
    Vector tes_diag;
    Matrix s;

    static BsStats init(int n) {
        BsStats stats;
        stats.t0 = Matrix::Ones(n, n) - Matrix::Identity(n, n);
        stats.tes_diag = Vector::Ones(n);
        stats.s = Matrix::Identity(n, n);
        return stats;
    }
};

/// One step of the coalescence recursions, in matrix form. Two dense
/// N x N products per propagated matrix; this is the serial bottleneck
/// of the exact estimator.
inline BsStats bs_update(const BsStats& stats, const BackwardMatrix& bw,
                         const Vector& prev_norm_weights) {
    const int n = static_cast<int>(stats.t0.rows());
    if (stats.t0.cols() != n || bw.beta.rows() != n || bw.beta.cols() != n ||
        prev_norm_weights.size() != n) {
        throw std::invalid_argument("bs_update: dimension mismatch");
    }
    BsStats next;
    next.t = stats.t + 1;
    next.tes_diag.noalias() = bw.beta * (stats.t0 * prev_norm_weights);
    next.t0.noalias() = bw.beta * stats.t0 * bw.beta.transpose();
    next.t0.diagonal().setZero();
    next.s.noalias() = bw.beta * stats.s * bw.beta.transpose();
    next.s.diagonal() = next.tes_diag;
    return next;
}

/// T0-only step, for runs that track just the disjoint estimators.
inline Matrix bs_update_disjoint(const Matrix& t0, const BackwardMatrix& bw) {
    Matrix next = bw.beta * t0 * bw.beta.transpose();
    next.diagonal().setZero();
    return next;
}

/// sum T0 / (N(N-1)): the stability diagnostic of the exact estimator.
inline double bs_disjoint_fraction(const Matrix& t0) {
    const double n = static_cast<double>(t0.rows());
    return t0.sum() / (n * (n - 1.0));
}

inline double bs_disjoint_fraction(const BsStats& stats) {
    return bs_disjoint_fraction(stats.t0);
}

namespace detail {

inline void require_synced(int stats_t, int state_t, int n, const char* who) {
    if (n < 2) throw std::invalid_argument(std::string(who) + ": requires N >= 2");
    if (stats_t != state_t) throw std::invalid_argument(std::string(who) + ": step mismatch");
}

}  // namespace detail

/// Disjoint estimator of the asymptotic variance of gamma_t^N(h). The
/// gamma_t^N(1)^2 factor and the N-dependent prefactor are combined in
/// log space and exponentiated once.
template <StateModel M, class H>
double bs_var_gamma(const Matrix& t0, int stats_t, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats_t, state.t, n, "bs_var_gamma");
    const Vector hv = apply(state, h);
    const double eta = hv.mean();
    const int t = state.t;
    const double quad = hv.dot(t0 * hv);
    const double log_ratio = t * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return std::exp(2.0 * state.log_gamma1) * (n * eta * eta - std::exp(log_ratio) * quad);
}

template <StateModel M, class H>
double bs_var_gamma(const BsStats& stats, const FilterState<M>& state, H&& h) {
    return bs_var_gamma(stats.t0, stats.t, state, h);
}

/// Disjoint estimator for the predictor eta_t^N(h).
template <StateModel M, class H>
double bs_var_eta(const Matrix& t0, int stats_t, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats_t, state.t, n, "bs_var_eta");
    Vector hv = apply(state, h);
    hv.array() -= hv.mean();
    const int t = state.t;
    const double log_pref = t * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return -std::exp(log_pref) * hv.dot(t0 * hv);
}

template <StateModel M, class H>
double bs_var_eta(const BsStats& stats, const FilterState<M>& state, H&& h) {
    return bs_var_eta(stats.t0, stats.t, state, h);
}

/// Disjoint estimator for the filter phi_t^N(h).
template <StateModel M, class H>
double bs_var_phi(const Matrix& t0, int stats_t, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats_t, state.t, n, "bs_var_phi");
    Vector hv = apply(state, h);
    hv.array() -= filter_estimate(state, h);
    const Vector weighted = state.norm_weights.cwiseProduct(hv);
    const int t = state.t;
    const double log_pref = (t + 2) * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return -std::exp(log_pref) * weighted.dot(t0 * weighted);
}

template <StateModel M, class H>
double bs_var_phi(const BsStats& stats, const FilterState<M>& state, H&& h) {
    return bs_var_phi(stats.t0, stats.t, state, h);
}

/// Term-by-term (unbiased) estimator of the gamma asymptotic variance.
template <StateModel M, class H>
double bs_tbt_variance(const BsStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats.t, state.t, n, "bs_tbt_variance");
    const Vector hv = apply(state, h);
    const int t = state.t;
    const Matrix combined = stats.s - (static_cast<double>(t + 1) / (n - 1)) * stats.t0;
    const double log_pref = 2.0 * state.log_gamma1 + (t - 1) * std::log(double(n)) -
                            t * std::log(double(n - 1));
    return std::exp(log_pref) * hv.dot(combined * hv);
}

/// Term-by-term estimator for the predictor: the centered test function
/// cancels the gamma factors exactly.
template <StateModel M, class H>
double bs_tbt_var_eta(const BsStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats.t, state.t, n, "bs_tbt_var_eta");
    Vector hv = apply(state, h);
    hv.array() -= hv.mean();
    const int t = state.t;
    const Matrix combined = stats.s - (static_cast<double>(t + 1) / (n - 1)) * stats.t0;
    const double log_pref = (t - 1) * std::log(double(n)) - t * std::log(double(n - 1));
    return std::exp(log_pref) * hv.dot(combined * hv);
}

/// Per-step history of a short run, kept only by desk-scale checks that
/// re-run the masked recursions from scratch.
struct BackwardRunRecord {
    std::vector<Matrix> betas;         // betas[s-1] = beta matrix at step s
    std::vector<Vector> prev_weights;  // prev_weights[s-1] = W_{s-1}

    void push(const BackwardMatrix& bw, const Vector& norm_weights) {
        betas.push_back(bw.beta);
        prev_weights.push_back(norm_weights);
    }
    int horizon() const { return static_cast<int>(betas.size()); }
};

/// Full T^b recursion for one coupling mask b (mask.size() == t + 1).
inline Matrix bs_masked_statistic(const std::vector<unsigned char>& mask,
                                  const BackwardRunRecord& record, int n) {
    const int t = static_cast<int>(mask.size()) - 1;
    if (t != record.horizon()) {
        throw std::invalid_argument("bs_masked_statistic: mask/record length mismatch");
    }
    Matrix stat = mask[0] == 0 ? Matrix(Matrix::Ones(n, n) - Matrix::Identity(n, n))
                               : Matrix(Matrix::Identity(n, n));
    for (int s = 1; s <= t; ++s) {
        const Matrix& beta = record.betas[s - 1];
        if (mask[s] == 0) {
            Matrix next = beta * stat * beta.transpose();
            next.diagonal().setZero();
            stat = std::move(next);
        } else {
            const Vector coupled = beta * (stat * record.prev_weights[s - 1]);
            stat = coupled.asDiagonal();
        }
    }
    return stat;
}

/// Unbiased estimator of mu_{b,t}(h (x) f) from a masked statistic.
inline double bs_masked_mu(const Matrix& masked_stat, const std::vector<unsigned char>& mask,
                           const Vector& h_values, const Vector& f_values, double log_gamma1) {
    const int n = static_cast<int>(masked_stat.rows());
    int zeros = 0;
    for (unsigned char b : mask) zeros += (b == 0);
    const int horizon = static_cast<int>(mask.size());
    const double log_pref = 2.0 * log_gamma1 + horizon * std::log(double(n)) -
                            zeros * std::log(double(n - 1)) - 2.0 * std::log(double(n));
    return std::exp(log_pref) * h_values.dot(masked_stat * f_values);
}

/// Largest entrywise deviation of sum_b T^b from the all-ones matrix,
/// over every coupling mask of the recorded run. Exact identity, not a
/// statistical one.
inline double bs_mask_sum_deviation(const BackwardRunRecord& record, int n) {
    const int t = record.horizon();
    Matrix total = Matrix::Zero(n, n);
    const std::size_t count = std::size_t{1} << (t + 1);
    std::vector<unsigned char> mask(t + 1);
    for (std::size_t bits = 0; bits < count; ++bits) {
        for (int s = 0; s <= t; ++s) mask[s] = (bits >> s) & 1u;
        total += bs_masked_statistic(mask, record, n);
    }
    return (total - Matrix::Ones(n, n)).cwiseAbs().maxCoeff();
}

/// Relative deviation of the mask-weighted sum of the mu estimators from
/// gamma_t^N(h)^2. Refuses horizons above 3: the enumeration grows as
/// 2^(t+1) full recursions.
template <StateModel M, class H>
double bs_identity_check(const BackwardRunRecord& record, const FilterState<M>& state, H&& h) {
    const int t = state.t;
    if (t > 3) throw std::invalid_argument("bs_identity_check: horizon too large");
    if (record.horizon() != t) throw std::invalid_argument("bs_identity_check: record/state mismatch");
    const int n = state.size();
    const Vector hv = apply(state, h);
    // Each mask-weighted term is gamma^2 N^-2 h' T^b h; work at that scale.
    double lhs = 0.0;
    const std::size_t count = std::size_t{1} << (t + 1);
    std::vector<unsigned char> mask(t + 1);
    for (std::size_t bits = 0; bits < count; ++bits) {
        for (int s = 0; s <= t; ++s) mask[s] = (bits >> s) & 1u;
        const Matrix stat = bs_masked_statistic(mask, record, n);
        lhs += hv.dot(stat * hv);
    }
    lhs /= static_cast<double>(n) * n;
    const double eta = hv.mean();
    const double rhs = eta * eta;
    if (rhs == 0.0) return std::abs(lhs);
    return std::abs(lhs - rhs) / std::abs(rhs);
}

}  // namespace smcvar
