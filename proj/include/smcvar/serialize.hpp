#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "smcvar/particle_filter.hpp"

namespace smcvar {

/// JSON snapshot of a filter state for checkpointing. Schema (all arrays
/// index particles unless noted):
///   { "format": "smcvar-filter-state", "version": 1, "t": int,
///     "particles": [double], "weights": [double], "norm_weights": [double],
///     "omega_sum": double, "log_gamma1": double,
///     "ancestors": [int], "eve": [int],
///     "lag_capacity": int, "enoch_ring": [[int]] (column per lag) }
template <StateModel M>
nlohmann::json filter_state_to_json(const FilterState<M>& state) {
    nlohmann::json j;
    j["format"] = "smcvar-filter-state";
    j["version"] = 1;
    j["t"] = state.t;
    j["particles"] = std::vector<double>(state.particles.begin(), state.particles.end());
    j["weights"] = std::vector<double>(state.weights.data(), state.weights.data() + state.weights.size());
    j["norm_weights"] = std::vector<double>(state.norm_weights.data(),
                                            state.norm_weights.data() + state.norm_weights.size());
    j["omega_sum"] = state.omega_sum;
    j["log_gamma1"] = state.log_gamma1;
    j["ancestors"] = std::vector<int>(state.ancestors.data(), state.ancestors.data() + state.ancestors.size());
    j["eve"] = std::vector<int>(state.eve.data(), state.eve.data() + state.eve.size());
    j["lag_capacity"] = state.lag_capacity;
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& col : state.enoch_ring) {
        ring.push_back(std::vector<int>(col.data(), col.data() + col.size()));
    }
    j["enoch_ring"] = ring;
    return j;
}

template <StateModel M>
FilterState<M> filter_state_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "smcvar-filter-state") {
        throw std::invalid_argument("filter_state_from_json: not a filter-state snapshot");
    }
    FilterState<M> state;
    state.t = j.at("t").get<int>();
    const auto particles = j.at("particles").get<std::vector<double>>();
    state.particles.assign(particles.begin(), particles.end());
    const auto load_vector = [&](const char* key) {
        const auto v = j.at(key).get<std::vector<double>>();
        return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    state.weights = load_vector("weights");
    state.norm_weights = load_vector("norm_weights");
    state.omega_sum = j.at("omega_sum").get<double>();
    state.log_gamma1 = j.at("log_gamma1").get<double>();
    const auto load_indices = [](const nlohmann::json& arr) {
        const auto v = arr.get<std::vector<int>>();
        return Eigen::Map<const IndexVector>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    state.ancestors = load_indices(j.at("ancestors"));
    state.eve = load_indices(j.at("eve"));
    state.lag_capacity = j.at("lag_capacity").get<int>();
    for (const auto& col : j.at("enoch_ring")) state.enoch_ring.push_back(load_indices(col));
    return state;
}

template <StateModel M>
void save_filter_state(const FilterState<M>& state, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_filter_state: cannot open " + path);
    out << filter_state_to_json(state).dump(2) << "\n";
}

}  // namespace smcvar
