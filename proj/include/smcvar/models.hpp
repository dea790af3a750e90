#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smcvar/model.hpp"
#include "smcvar/particle_filter.hpp"

namespace smcvar {

inline double normal_logpdf(double x, double mean, double variance) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * M_PI * variance) + d * d / variance);
}

inline double normal_pdf(double x, double mean, double variance) {
    return std::exp(normal_logpdf(x, mean, variance));
}

struct SvParams {
    double phi = 0.975;
    double beta = 0.641;
    double sigma = 0.165;
};

/// Log-volatility model: X_{n+1} = phi X_n + sigma U_{n+1},
/// Y_n = beta exp(X_n / 2) V_n, with X_0 drawn from the stationary law.
struct StochasticVolatility {
    using State = double;
    static constexpr int state_dim = 1;

    SvParams params;
    std::vector<double> obs;

    StochasticVolatility(SvParams p, std::vector<double> observations)
        : params(p), obs(std::move(observations)) {
        if (std::abs(params.phi) >= 1.0) {
            throw std::invalid_argument("StochasticVolatility: |phi| must be < 1");
        }
    }

    double stationary_variance() const {
        return params.sigma * params.sigma / (1.0 - params.phi * params.phi);
    }

    double init_sample(RngStream& rng) const {
        return std::sqrt(stationary_variance()) * rng.normal();
    }
    double init_logdensity(double x) const {
        return normal_logpdf(x, 0.0, stationary_variance());
    }
    double trans_sample(RngStream& rng, double x, int) const {
        return params.phi * x + params.sigma * rng.normal();
    }
    double trans_density(double x_prev, double x_next, int) const {
        return normal_pdf(x_next, params.phi * x_prev, params.sigma * params.sigma);
    }
    void trans_density_row(std::span<const double> prev, double x, int,
                           std::span<double> out) const {
        const double inv_two_var = 0.5 / (params.sigma * params.sigma);
        const double norm = 1.0 / (params.sigma * std::sqrt(2.0 * M_PI));
        for (std::size_t j = 0; j < prev.size(); ++j) {
            const double d = x - params.phi * prev[j];
            out[j] = norm * std::exp(-d * d * inv_two_var);
        }
    }
    double potential(double x, int t) const {
        return normal_pdf(obs.at(t), 0.0, params.beta * params.beta * std::exp(x));
    }
    /// Supremum of the potential over x (density at the mode in x).
    double potential_bound(int t) const {
        const double y = obs.at(t);
        if (y == 0.0) return std::numeric_limits<double>::infinity();
        return std::exp(-0.5) / (std::abs(y) * std::sqrt(2.0 * M_PI));
    }
};

/// Simulate states and observations of the volatility model.
inline std::pair<std::vector<double>, std::vector<double>> sv_simulate(const SvParams& params,
                                                                       int horizon,
                                                                       RngStream& rng) {
    if (std::abs(params.phi) >= 1.0) {
        throw std::invalid_argument("sv_simulate: |phi| must be < 1");
    }
    if (horizon < 1) throw std::invalid_argument("sv_simulate: T must be >= 1");
    std::vector<double> states(horizon), observations(horizon);
    const double init_sd =
        params.sigma / std::sqrt(1.0 - params.phi * params.phi);
    states[0] = init_sd * rng.normal();
    for (int t = 1; t < horizon; ++t) {
        states[t] = params.phi * states[t - 1] + params.sigma * rng.normal();
    }
    for (int t = 0; t < horizon; ++t) {
        observations[t] = params.beta * std::exp(states[t] / 2.0) * rng.normal();
    }
    return {std::move(states), std::move(observations)};
}

/// Scalar linear-Gaussian state space: X_{t+1} = a X_t + sd_x U,
/// Y_t = c X_t + sd_y V. Paired with the Kalman recursion below as a
/// closed-form test oracle.
struct LinearGaussian {
    using State = double;
    static constexpr int state_dim = 1;

    double coeff = 0.9;
    double sd_x = 1.0;
    double obs_coeff = 1.0;
    double sd_y = 1.0;
    double init_mean = 0.0;
    double init_sd = 1.0;
    std::vector<double> obs;

    double init_sample(RngStream& rng) const { return init_mean + init_sd * rng.normal(); }
    double init_logdensity(double x) const {
        return normal_logpdf(x, init_mean, init_sd * init_sd);
    }
    double trans_sample(RngStream& rng, double x, int) const {
        return coeff * x + sd_x * rng.normal();
    }
    double trans_density(double x_prev, double x_next, int) const {
        return normal_pdf(x_next, coeff * x_prev, sd_x * sd_x);
    }
    double potential(double x, int t) const {
        return normal_pdf(obs.at(t), obs_coeff * x, sd_y * sd_y);
    }
};

/// Observation record: one float per line, or a CSV whose header names a
/// column `y`.
inline std::vector<double> load_observations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open observation file: " + path);
    std::vector<double> values;
    std::string line;
    int y_column = -1;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (first && line.find(',') != std::string::npos) {
            std::stringstream header(line);
            std::string field;
            int col = 0;
            while (std::getline(header, field, ',')) {
                if (field == "y") y_column = col;
                ++col;
            }
            if (y_column < 0) throw std::runtime_error("observation CSV has no column named y");
            first = false;
            continue;
        }
        first = false;
        if (y_column >= 0) {
            std::stringstream fields(line);
            std::string field;
            for (int col = 0; std::getline(fields, field, ','); ++col) {
                if (col == y_column) values.push_back(std::stod(field));
            }
        } else {
            values.push_back(std::stod(line));
        }
    }
    if (values.empty()) throw std::runtime_error("observation file is empty: " + path);
    return values;
}

struct KalmanResult {
    Vector pred_mean, pred_var;  // X_t | Y_{0:t-1}
    Vector filt_mean, filt_var;  // X_t | Y_{0:t}
};

inline KalmanResult kalman_filter(const LinearGaussian& model,
                                  const std::vector<double>& observations) {
    const int horizon = static_cast<int>(observations.size());
    KalmanResult r;
    r.pred_mean.resize(horizon);
    r.pred_var.resize(horizon);
    r.filt_mean.resize(horizon);
    r.filt_var.resize(horizon);
    double pm = model.init_mean;
    double pv = model.init_sd * model.init_sd;
    const double c = model.obs_coeff;
    const double q = model.sd_x * model.sd_x;
    const double ry = model.sd_y * model.sd_y;
    for (int t = 0; t < horizon; ++t) {
        if (!(pv > 0.0)) throw std::runtime_error("kalman_filter: non-positive variance");
        r.pred_mean[t] = pm;
        r.pred_var[t] = pv;
        const double innov_var = c * c * pv + ry;
        const double gain = pv * c / innov_var;
        const double fm = pm + gain * (observations[t] - c * pm);
        const double fv = (1.0 - gain * c) * pv;
        r.filt_mean[t] = fm;
        r.filt_var[t] = fv;
        pm = model.coeff * fm;
        pv = model.coeff * model.coeff * fv + q;
    }
    return r;
}

}  // namespace smcvar
