#include "pfagent/grid/power_flow.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "pfagent/util/error.hpp"

namespace pfagent::grid {

using cd = std::complex<double>;

namespace {

const SlackRow* active_slack(const CaseData& data) {
    for (const auto& s : data.slacks)
        if (s.u != 0.0) return &s;
    return nullptr;
}

std::size_t pos_of(const CaseData& data, int bus) {
    auto p = data.bus_position(bus);
    if (!p) throw Error("CaseLoadFailure", "reference to missing bus " + std::to_string(bus));
    return *p;
}

}  // namespace

bool network_connected(const CaseData& data) {
    const SlackRow* slack = active_slack(data);
    if (!slack) return false;
    const std::size_t nb = data.buses.size();
    std::vector<std::vector<std::size_t>> adj(nb);
    for (const auto& l : data.lines) {
        if (l.u == 0.0) continue;
        const auto f = pos_of(data, l.bus1), t = pos_of(data, l.bus2);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<char> seen(nb, 0);
    std::vector<std::size_t> stack{pos_of(data, slack->bus)};
    seen[stack.back()] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        const auto k = stack.back();
        stack.pop_back();
        for (auto m : adj[k]) {
            if (!seen[m]) {
                seen[m] = 1;
                ++count;
                stack.push_back(m);
            }
        }
    }
    return count == nb;
}

PowerFlowResult solve_power_flow(const CaseData& data, const PowerFlowOptions& opts) {
    PowerFlowResult res;
    const SlackRow* slack = active_slack(data);
    if (!slack) throw Error("CaseLoadFailure", "case has no in-service slack device");
    const int nb = static_cast<int>(data.buses.size());
    const auto slack_pos = static_cast<int>(pos_of(data, slack->bus));

    if (!network_connected(data)) {
        res.islanded = true;
        return res;
    }

    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(nb, nb);
    for (const auto& l : data.lines) {
        if (l.u == 0.0) continue;
        const auto f = pos_of(data, l.bus1), t = pos_of(data, l.bus2);
        const cd ys = 1.0 / cd(l.r, l.x);
        const cd ratio = std::polar(l.tap, l.phi);
        const cd ytt = ys + cd(0.0, 0.5 * l.b);
        Y(f, f) += ytt / std::norm(ratio);
        Y(t, t) += ytt;
        Y(f, t) -= ys / std::conj(ratio);
        Y(t, f) -= ys / ratio;
    }
    for (const auto& s : data.shunts) {
        if (s.u == 0.0) continue;
        const auto k = pos_of(data, s.bus);
        Y(k, k) += cd(s.g, s.b);
    }

    Eigen::VectorXd pspec = Eigen::VectorXd::Zero(nb), qspec = Eigen::VectorXd::Zero(nb);
    for (const auto& d : data.loads) {
        if (d.u == 0.0) continue;
        const auto k = pos_of(data, d.bus);
        pspec(k) -= d.p0;
        qspec(k) -= d.q0;
    }
    Eigen::VectorXd vm = Eigen::VectorXd::Ones(nb);
    Eigen::VectorXd va = Eigen::VectorXd::Constant(nb, slack->a0);
    std::set<int> pv_set;
    for (const auto& g : data.pvs) {
        if (g.u == 0.0) continue;
        const int k = static_cast<int>(pos_of(data, g.bus));
        pspec(k) += g.p0;
        vm(k) = g.v0;
        pv_set.insert(k);
    }
    vm(slack_pos) = slack->v0;
    va(slack_pos) = slack->a0;
    pv_set.erase(slack_pos);

    std::vector<int> ns, pq;
    for (int i = 0; i < nb; ++i) {
        if (i == slack_pos) continue;
        ns.push_back(i);
        if (!pv_set.count(i)) pq.push_back(i);
    }
    const int na = static_cast<int>(ns.size()), nq = static_cast<int>(pq.size());

    auto voltage = [&] {
        Eigen::VectorXcd v(nb);
        for (int i = 0; i < nb; ++i) v(i) = std::polar(vm(i), va(i));
        return v;
    };

    for (int it = 1; it <= opts.max_iterations; ++it) {
        const Eigen::VectorXcd V = voltage();
        const Eigen::VectorXcd I = Y * V;
        const Eigen::VectorXcd S = V.cwiseProduct(I.conjugate());
        Eigen::VectorXd mis(na + nq);
        for (int i = 0; i < na; ++i) mis(i) = pspec(ns[i]) - S(ns[i]).real();
        for (int i = 0; i < nq; ++i) mis(na + i) = qspec(pq[i]) - S(pq[i]).imag();
        res.mismatch = mis.size() ? mis.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(res.mismatch)) break;
        if (res.mismatch < opts.tolerance) {
            res.converged = true;
            res.iterations = it - 1;
            break;
        }

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        Eigen::MatrixXd J(na + nq, na + nq);
        for (int r = 0; r < na + nq; ++r) {
            const int bi = r < na ? ns[r] : pq[r - na];
            for (int c = 0; c < na + nq; ++c) {
                const int bj = c < na ? ns[c] : pq[c - na];
                cd dS;
                if (c < na) {
                    cd inner = -Y(bi, bj) * V(bj);
                    if (bi == bj) inner += I(bi);
                    dS = cd(0.0, 1.0) * V(bi) * std::conj(inner);
                } else {
                    const cd vn = V(bj) / std::abs(V(bj));
                    dS = V(bi) * std::conj(Y(bi, bj) * vn);
                    if (bi == bj) dS += std::conj(I(bi)) * vn;
                }
                J(r, c) = r < na ? dS.real() : dS.imag();
            }
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) break;
        const Eigen::VectorXd dx = lu.solve(mis);
        for (int i = 0; i < na; ++i) va(ns[i]) += dx(i);
        for (int i = 0; i < nq; ++i) vm(pq[i]) += dx(na + i);
        if (it == opts.max_iterations) res.iterations = it;
    }

    if (res.converged) {
        const Eigen::VectorXcd V = voltage();
        const Eigen::VectorXcd S = V.cwiseProduct((Y * V).conjugate());
        res.vm.assign(vm.data(), vm.data() + nb);
        res.va.assign(va.data(), va.data() + nb);
        res.s_inj.assign(S.data(), S.data() + nb);
    }
    return res;
}

std::pair<double, double> generator_output(const CaseData& data, const PowerFlowResult& pf,
                                           const std::string& model, const std::string& idx) {
    if (!pf.converged) throw Error("OracleNonConvergence", "no solved operating point");
    int bus = 0;
    bool found = false;
    if (model == "Slack") {
        for (const auto& s : data.slacks)
            if (s.idx == idx) bus = s.bus, found = true;
    } else if (model == "PV") {
        for (const auto& g : data.pvs)
            if (g.idx == idx) bus = g.bus, found = true;
    }
    if (!found) throw Error("UnknownDevice", model + " " + idx + " not found");
    cd s = pf.s_inj[pos_of(data, bus)];
    for (const auto& d : data.loads)
        if (d.u != 0.0 && d.bus == bus) s += cd(d.p0, d.q0);
    for (const auto& g : data.pvs)
        if (g.u != 0.0 && g.bus == bus && !(model == "PV" && g.idx == idx)) s -= cd(g.p0, 0.0);
    return {s.real(), s.imag()};
}

}  // namespace pfagent::grid
