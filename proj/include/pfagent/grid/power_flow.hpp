#pragma once

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "pfagent/grid/case_data.hpp"

namespace pfagent::grid {

struct PowerFlowOptions {
    double tolerance = 1e-10;
    int max_iterations = 50;
};

struct PowerFlowResult {
    bool converged = false;
    bool islanded = false;
    int iterations = 0;
    double mismatch = 0.0;
    std::vector<double> vm;                     // by bus position
    std::vector<double> va;                     // rad
    std::vector<std::complex<double>> s_inj;    // net injection, p.u.
};

/// Polar Newton-Raphson with constant-power loads and no reactive limits.
/// An islanded network is reported without iterating.
PowerFlowResult solve_power_flow(const CaseData& data, const PowerFlowOptions& opts = {});

/// (p, q) delivered by a Slack or PV device at the solved point.
std::pair<double, double> generator_output(const CaseData& data, const PowerFlowResult& pf,
                                           const std::string& model, const std::string& idx);

/// True when every bus is reachable from the first in-service slack.
bool network_connected(const CaseData& data);

}  // namespace pfagent::grid
