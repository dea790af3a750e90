#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "smcvar/backward.hpp"

namespace smcvar {

/// M backward indices per particle, drawn i.i.d. from each row of the
/// backward matrix by exact inverse-CDF sampling. indices(k, i) = J^i_k.
inline Eigen::MatrixXi paris_sample_indices(const BackwardMatrix& bw, int m, RngStream& rng) {
    if (m <= 1) throw std::invalid_argument("paris_sample_indices: PaRIS requires M > 1");
    const int n = bw.rows();
    Eigen::MatrixXi indices(n, m);
    Vector cumulative(n);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int l = 0; l < n; ++l) {
            acc += bw.beta(k, l);
            cumulative[l] = acc;
        }
        for (int i = 0; i < m; ++i) {
            const double u = rng.uniform() * acc;
            const double* begin = cumulative.data();
            const double* it = std::lower_bound(begin, begin + n, u);
            indices(k, i) = static_cast<int>(std::min<Eigen::Index>(it - begin, n - 1));
        }
    }
    return indices;
}

/// Sampled-index surrogate of the disjointness statistic T^0.
struct ParisStats {
    int t = 0;
    int m = 0;
    Matrix t0_tilde;

    static ParisStats init(int n, int m) {
        if (m <= 1) throw std::invalid_argument("ParisStats: PaRIS requires M > 1");
        ParisStats stats;
        stats.m = m;
        stats.t0_tilde = Matrix::Ones(n, n) - Matrix::Identity(n, n);
        return stats;
    }
};

/// Conditionally unbiased O(M N^2) replacement for the exact update:
/// T~0_t(k, l) = 1_{k != l} M^-1 sum_i T~0_{t-1}(J^i_k, J^i_l).
inline ParisStats paris_update(const ParisStats& stats, const Eigen::MatrixXi& indices,
                               const Vector& prev_norm_weights) {
    const int n = static_cast<int>(stats.t0_tilde.rows());
    if (indices.rows() != n || indices.cols() != stats.m || prev_norm_weights.size() != n) {
        throw std::invalid_argument("paris_update: dimension mismatch");
    }
    ParisStats next;
    next.t = stats.t + 1;
    next.m = stats.m;
    next.t0_tilde = Matrix::Zero(n, n);
    for (int i = 0; i < stats.m; ++i) {
        for (int l = 0; l < n; ++l) {
            const int jl = indices(l, i);
            const double* src = stats.t0_tilde.data() + static_cast<std::ptrdiff_t>(jl) * n;
            double* dst = next.t0_tilde.data() + static_cast<std::ptrdiff_t>(l) * n;
            for (int k = 0; k < n; ++k) dst[k] += src[indices(k, i)];
        }
    }
    next.t0_tilde /= static_cast<double>(stats.m);
    next.t0_tilde.diagonal().setZero();
    return next;
}

template <StateModel M, class H>
double paris_var_gamma(const ParisStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats.t, state.t, n, "paris_var_gamma");
    const Vector hv = apply(state, h);
    const double eta = hv.mean();
    const int t = state.t;
    const double quad = hv.dot(stats.t0_tilde * hv);
    const double log_ratio = t * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return std::exp(2.0 * state.log_gamma1) * (n * eta * eta - std::exp(log_ratio) * quad);
}

template <StateModel M, class H>
double paris_var_eta(const ParisStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats.t, state.t, n, "paris_var_eta");
    Vector hv = apply(state, h);
    hv.array() -= hv.mean();
    const int t = state.t;
    const double log_pref = t * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return -std::exp(log_pref) * hv.dot(stats.t0_tilde * hv);
}

template <StateModel M, class H>
double paris_var_phi(const ParisStats& stats, const FilterState<M>& state, H&& h) {
    const int n = state.size();
    detail::require_synced(stats.t, state.t, n, "paris_var_phi");
    Vector hv = apply(state, h);
    hv.array() -= filter_estimate(state, h);
    const Vector weighted = state.norm_weights.cwiseProduct(hv);
    const int t = state.t;
    const double log_pref = (t + 2) * std::log(double(n)) - (t + 1) * std::log(double(n - 1));
    return -std::exp(log_pref) * weighted.dot(stats.t0_tilde * weighted);
}

/// Masked PaRIS recursion with shared index draws; only exercised by the
/// sum-over-masks identity at desk scale. indices_by_step[s-1] are the
/// J draws used at step s.
inline Matrix paris_masked_statistic(const std::vector<unsigned char>& mask,
                                     const std::vector<Eigen::MatrixXi>& indices_by_step,
                                     const std::vector<Vector>& prev_weights, int n, int m) {
    const int t = static_cast<int>(mask.size()) - 1;
    if (t != static_cast<int>(indices_by_step.size())) {
        throw std::invalid_argument("paris_masked_statistic: mask/indices length mismatch");
    }
    Matrix stat = mask[0] == 0 ? Matrix(Matrix::Ones(n, n) - Matrix::Identity(n, n))
                               : Matrix(Matrix::Identity(n, n));
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int s = 1; s <= t; ++s) {
        const Eigen::MatrixXi& indices = indices_by_step[s - 1];
        Matrix next = Matrix::Zero(n, n);
        if (mask[s] == 0) {
            for (int i = 0; i < m; ++i) {
                for (int k = 0; k < n; ++k) {
                    for (int l = 0; l < n; ++l) {
                        if (k != l) next(k, l) += stat(indices(k, i), indices(l, i));
                    }
                }
            }
            next *= inv_m;
            next.diagonal().setZero();
        } else {
            const Vector coupled = stat * prev_weights[s - 1];
            for (int k = 0; k < n; ++k) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += coupled[indices(k, i)];
                next(k, k) = acc * inv_m;
            }
        }
        stat = std::move(next);
    }
    return stat;
}

}  // namespace smcvar
