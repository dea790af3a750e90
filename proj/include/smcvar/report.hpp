#pragma once

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "smcvar/experiment.hpp"
#include "smcvar/oracle.hpp"

namespace smcvar {

using ConfigMap = std::map<std::string, std::string>;

/// Flat key = value configuration file; '#' starts a comment.
inline ConfigMap read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    ConfigMap config;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto first = s.find_first_not_of(" \t\r");
            const auto last = s.find_last_not_of(" \t\r");
            return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) config[key] = value;
    }
    return config;
}

/// Per-step estimate rows. Column order is fixed:
/// replicate,t,estimator,estimate,d_bs,d_gt,step_seconds
/// The full configuration is embedded as leading '# key = value' lines.
inline void write_records_csv(const std::string& path, const ConfigMap& config,
                              const std::vector<std::vector<StepRecord>>& replicates) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out.precision(17);
    for (const auto& [key, value] : config) out << "# " << key << " = " << value << "\n";
    out << "replicate,t,estimator,estimate,d_bs,d_gt,step_seconds\n";
    for (const auto& records : replicates) {
        for (const auto& row : records) {
            for (const auto& [name, value] : row.estimates) {
                out << row.replicate << ',' << row.t << ',' << name << ',' << value << ','
                    << row.d_bs << ',' << row.d_gt << ',' << row.seconds << "\n";
            }
        }
    }
}

/// Reference-curve rows from the replication oracle:
/// t,asymptotic_variance,stderr_jackknife
inline void write_oracle_csv(const std::string& path, const ConfigMap& config,
                             const std::vector<ReplicationResult>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out.precision(17);
    for (const auto& [key, value] : config) out << "# " << key << " = " << value << "\n";
    out << "t,asymptotic_variance,stderr_jackknife\n";
    for (std::size_t t = 0; t < curve.size(); ++t) {
        out << t << ',' << curve[t].estimate << ',' << curve[t].stderr_jack << "\n";
    }
}

/// Median/quartile summary across replicates per estimator, plus the
/// embedded configuration.
inline nlohmann::json summary_json(const ConfigMap& config,
                                   const std::vector<std::vector<StepRecord>>& replicates,
                                   const std::vector<std::string>& estimator_names) {
    nlohmann::json j;
    for (const auto& [key, value] : config) j["config"][key] = value;
    for (const auto& name : estimator_names) {
        const SummaryCurve summary = summarize_curves(extract_curves(replicates, name));
        j["estimators"][name]["median"] = summary.median;
        j["estimators"][name]["q25"] = summary.q25;
        j["estimators"][name]["q75"] = summary.q75;
    }
    const SummaryCurve d_bs = summarize_curves(extract_diagnostic(replicates, true));
    const SummaryCurve d_gt = summarize_curves(extract_diagnostic(replicates, false));
    j["diagnostics"]["d_bs_median"] = d_bs.median;
    j["diagnostics"]["d_gt_median"] = d_gt.median;
    return j;
}

}  // namespace smcvar
