#pragma once

#include <algorithm>
#include <chrono>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "smcvar/backward.hpp"
#include "smcvar/genealogy.hpp"
#include "smcvar/models.hpp"
#include "smcvar/oracle.hpp"
#include "smcvar/parallel.hpp"
#include "smcvar/paris.hpp"
#include "smcvar/smoothing.hpp"

namespace smcvar {

/// |estimate / reference - 1|: relative error against a positive
/// reference value.
inline double compute_error_metric(double estimate, double reference) {
    if (!(reference > 0.0)) {
        throw std::invalid_argument("compute_error_metric: reference must be positive");
    }
    return std::abs(estimate / reference - 1.0);
}

/// Which per-step estimators a run should emit. Estimator keys follow
/// the config syntax: cle, lag:L, bs, bs_tbt, paris:M, gt_tbt,
/// smoothing:L.
struct EstimatorSet {
    bool cle = false;
    std::vector<int> lags;
    bool bs = false;
    bool bs_tbt = false;
    int paris_m = 0;       // 0 = off
    bool gt_tbt = false;
    int smoothing_ell = -1;  // -1 = off

    bool needs_bs_stats() const { return bs || bs_tbt || smoothing_ell >= 0; }
    bool needs_gt_stats() const { return gt_tbt; }
    bool needs_beta() const { return needs_bs_stats() || paris_m > 0; }
    int lag_capacity() const {
        int cap = 0;
        for (int l : lags) cap = std::max(cap, l);
        return cap;
    }
    bool empty() const {
        return !cle && lags.empty() && !bs && !bs_tbt && paris_m == 0 && !gt_tbt &&
               smoothing_ell < 0;
    }
};

inline EstimatorSet parse_estimator_set(const std::string& spec) {
    EstimatorSet set;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        const std::string key = item.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : item.substr(colon + 1);
        if (key == "cle") {
            set.cle = true;
        } else if (key == "lag") {
            set.lags.push_back(std::stoi(arg));
        } else if (key == "bs") {
            set.bs = true;
        } else if (key == "bs_tbt") {
            set.bs_tbt = true;
        } else if (key == "paris") {
            set.paris_m = std::stoi(arg);
        } else if (key == "gt_tbt") {
            set.gt_tbt = true;
        } else if (key == "smoothing") {
            set.smoothing_ell = std::stoi(arg);
        } else {
            throw std::invalid_argument("unknown estimator key: " + item);
        }
    }
    return set;
}

/// One output row of the harness: every requested estimate at one time
/// step of one replicate, plus the degeneracy diagnostics.
struct StepRecord {
    int replicate = 0;
    int t = 0;
    double d_bs = std::numeric_limits<double>::quiet_NaN();
    double d_gt = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
    std::vector<std::pair<std::string, double>> estimates;
};

namespace detail {

template <StateModel M>
struct VarianceTrackers {
    std::optional<BsStats> bs;       // full T0/S pair (term-by-term, smoothing)
    std::optional<Matrix> t0_only;   // disjoint estimators alone
    std::optional<GtStats> gt;
    std::optional<ParisStats> paris;
    std::optional<SmoothingStats> smoothing;

    const Matrix* t0() const {
        if (bs) return &bs->t0;
        if (t0_only) return &*t0_only;
        return nullptr;
    }
};

}  // namespace detail

/// Run one bootstrap filter for `horizon` steps, updating the requested
/// variance estimators online; h is the identity test function. Records
/// one StepRecord per time step, including t = 0. When `final_state` is
/// given the terminal filter state is copied there (checkpointing).
template <StateModel M>
std::vector<StepRecord> run_filter_var_replicate(const M& model, int num_particles, int horizon,
                                                 const EstimatorSet& set, RngStream rng,
                                                 int replicate_id = 0,
                                                 FilterState<M>* final_state = nullptr) {
    if (num_particles < 2) throw std::invalid_argument("run_filter_var_replicate: N >= 2 required");
    if (set.empty()) throw std::invalid_argument("run_filter_var_replicate: no estimators requested");
    const auto h = [](double x) { return x; };

    std::vector<StepRecord> records;
    records.reserve(horizon + 1);

    auto state = filter_init(model, num_particles, rng, set.lag_capacity());
    detail::VarianceTrackers<M> trackers;
    const bool full_bs = set.bs_tbt || set.smoothing_ell >= 0;
    if (full_bs) {
        trackers.bs = BsStats::init(num_particles);
    } else if (set.bs) {
        trackers.t0_only =
            Matrix(Matrix::Ones(num_particles, num_particles) - Matrix::Identity(num_particles, num_particles));
    }
    if (set.needs_gt_stats()) trackers.gt = GtStats::init(num_particles);
    if (set.paris_m > 0) trackers.paris = ParisStats::init(num_particles, set.paris_m);

    const auto emit = [&](double seconds) {
        StepRecord row;
        row.replicate = replicate_id;
        row.t = state.t;
        row.seconds = seconds;
        row.d_gt = gt_disjoint_fraction(state);
        if (const Matrix* t0 = trackers.t0()) row.d_bs = bs_disjoint_fraction(*t0);
        if (set.cle) row.estimates.emplace_back("cle", cle_variance(state, h));
        for (int lag : set.lags) {
            const int effective = std::min(lag, state.t);
            row.estimates.emplace_back("lag:" + std::to_string(lag),
                                       lag_variance(state, h, effective));
        }
        if (set.bs) {
            row.estimates.emplace_back("bs", bs_var_eta(*trackers.t0(), state.t, state, h));
        }
        if (set.bs_tbt) {
            row.estimates.emplace_back("bs_tbt", bs_tbt_var_eta(*trackers.bs, state, h));
        }
        if (trackers.paris) {
            row.estimates.emplace_back("paris:" + std::to_string(set.paris_m),
                                       paris_var_eta(*trackers.paris, state, h));
        }
        if (set.gt_tbt) {
            row.estimates.emplace_back("gt_tbt", gt_tbt_var_eta(*trackers.gt, state, h));
        }
        if (trackers.smoothing) {
            row.estimates.emplace_back("smoothing:" + std::to_string(set.smoothing_ell),
                                       smoothing_variance(*trackers.smoothing, state));
        }
        records.push_back(std::move(row));
    };

    if (set.smoothing_ell == 0 && trackers.bs) {
        trackers.smoothing = smoothing_init(state, h, *trackers.bs);
    }
    emit(0.0);

    for (int step = 1; step <= horizon; ++step) {
        const auto started = std::chrono::steady_clock::now();
        const FilterState<M> prev = std::move(state);
        state = filter_step(prev, model, rng);
        if (set.needs_beta()) {
            const BackwardMatrix bw = backward_matrix(
                prev, std::span<const typename M::State>(state.particles), model);
            if (trackers.bs) {
                *trackers.bs = bs_update(*trackers.bs, bw, prev.norm_weights);
                if (trackers.smoothing) {
                    smoothing_var_update(*trackers.smoothing, bw, state.norm_weights,
                                         *trackers.bs);
                }
            } else if (trackers.t0_only) {
                *trackers.t0_only = bs_update_disjoint(*trackers.t0_only, bw);
            }
            if (trackers.paris) {
                const Eigen::MatrixXi indices = paris_sample_indices(bw, set.paris_m, rng);
                *trackers.paris = paris_update(*trackers.paris, indices, prev.norm_weights);
            }
        }
        if (trackers.gt) *trackers.gt = gt_tbt_update(*trackers.gt, state, prev.norm_weights);
        if (set.smoothing_ell == state.t && trackers.bs) {
            trackers.smoothing = smoothing_init(state, h, *trackers.bs);
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        emit(seconds);
    }
    if (final_state != nullptr) *final_state = std::move(state);
    return records;
}

/// Medians and quartiles of one estimator across replicates, per step.
struct SummaryCurve {
    std::vector<double> median, q25, q75;
};

inline double quantile_sorted(std::vector<double>& values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - lo;
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

inline SummaryCurve summarize_curves(const std::vector<std::vector<double>>& by_replicate) {
    SummaryCurve out;
    if (by_replicate.empty()) return out;
    const std::size_t horizon = by_replicate.front().size();
    out.median.resize(horizon);
    out.q25.resize(horizon);
    out.q75.resize(horizon);
    std::vector<double> column(by_replicate.size());
    for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t r = 0; r < by_replicate.size(); ++r) column[r] = by_replicate[r][t];
        std::vector<double> tmp = column;
        out.q25[t] = quantile_sorted(tmp, 0.25);
        tmp = column;
        out.median[t] = quantile_sorted(tmp, 0.5);
        tmp = column;
        out.q75[t] = quantile_sorted(tmp, 0.75);
    }
    return out;
}

/// Pull one named estimator out of replicate records as per-step curves.
inline std::vector<std::vector<double>> extract_curves(
    const std::vector<std::vector<StepRecord>>& replicates, const std::string& name) {
    std::vector<std::vector<double>> curves;
    curves.reserve(replicates.size());
    for (const auto& records : replicates) {
        std::vector<double> curve;
        curve.reserve(records.size());
        for (const auto& row : records) {
            for (const auto& [key, value] : row.estimates) {
                if (key == name) curve.push_back(value);
            }
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

inline std::vector<std::vector<double>> extract_diagnostic(
    const std::vector<std::vector<StepRecord>>& replicates, bool backward) {
    std::vector<std::vector<double>> curves;
    curves.reserve(replicates.size());
    for (const auto& records : replicates) {
        std::vector<double> curve;
        curve.reserve(records.size());
        for (const auto& row : records) curve.push_back(backward ? row.d_bs : row.d_gt);
        curves.push_back(std::move(curve));
    }
    return curves;
}

}  // namespace smcvar
