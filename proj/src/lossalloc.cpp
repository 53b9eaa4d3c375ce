#include "p2pflow/lossalloc.hpp"

#include <cmath>

namespace p2pflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("lossalloc", msg); }

// Complex response of the line's current to nodal injections and the current
// change itself: dI = sum_k (A_k + i B_k)/z * dp_k. Returns the per-node
// coefficient vectors and the aggregate (C + i D).
struct LineResponse {
    Eigen::VectorXcd a;  // A_k
    Eigen::VectorXcd b;  // B_k
    Complex c;           // sum A_k dp_k
    Complex d;           // sum B_k dp_k
};

LineResponse line_response(const BaseCase& base, const Line& line, Phase phase,
                           const Eigen::VectorXd& dp) {
    const SensitivityModel& m = base.sens[static_cast<int>(phase)];
    const int nn = m.count();
    LineResponse r;
    r.a = Eigen::VectorXcd::Zero(nn);
    r.b = Eigen::VectorXcd::Zero(nn);
    const auto side = [&](int bus_id, double sign) {
        if (bus_id == base.grid.slack_id) return; // fixed phasor, no response
        int pos = -1;
        for (int k = 0; k < nn; ++k)
            if (m.bus_ids[k] == bus_id) {
                pos = k;
                break;
            }
        if (pos < 0) fail("bus " + std::to_string(bus_id) + " not in sensitivity index");
        const Complex rot = std::polar(1.0, m.va[pos]);
        for (int k = 0; k < nn; ++k) {
            r.a[k] += sign * m.s_v(pos, k) * rot;
            r.b[k] += sign * m.vm[pos] * m.s_delta(pos, k) * rot;
        }
    };
    side(line.from, +1.0);
    side(line.to, -1.0);
    r.c = r.a.cwiseProduct(dp.cast<Complex>()).sum(); // plain sum A_k dp_k
    r.d = r.b.cwiseProduct(dp.cast<Complex>()).sum();
    return r;
}

} // namespace

Eigen::VectorXd line_loss_gradient(const BaseCase& base, int line_index, Phase phase,
                                   const Eigen::VectorXd& dp) {
    if (line_index < 0 || line_index >= static_cast<int>(base.grid.lines.size()))
        fail("unknown line index " + std::to_string(line_index));
    const SensitivityModel& m = base.sens[static_cast<int>(phase)];
    if (dp.size() != m.count()) fail("injection vector dimension mismatch");
    const Line& line = base.grid.lines[line_index];
    const LineResponse r = line_response(base, line, phase, dp);
    const double z2 = line.r * line.r + line.x * line.x;
    const Complex di = (r.c + Complex(0, 1) * r.d); // times 1/z below
    Eigen::VectorXd grad(m.count());
    for (int k = 0; k < m.count(); ++k) {
        // d(R|dI|^2)/dp_k = 2R/|z|^2 Re((A_k + iB_k) conj(C + iD))
        const Complex dk = r.a[k] + Complex(0, 1) * r.b[k];
        grad[k] = 2.0 * line.r / z2 * (dk * std::conj(di)).real();
    }
    return grad;
}

TlcReport transaction_loss_coefficients(const BaseCase& base, const TradeBlock& block,
                                        const std::vector<double>& quantity_kw, bool verbose,
                                        Exec exec) {
    if (quantity_kw.size() != block.size()) fail("quantity/block size mismatch");
    const double s_base = base.s_base_kva();
    const SensitivityModel& ref = base.sens[0];
    const int nn = ref.count();
    const int nt = static_cast<int>(block.size());
    const int nl = static_cast<int>(base.grid.lines.size());

    const auto node_pos = [&](int bus_id) {
        for (int k = 0; k < nn; ++k)
            if (ref.bus_ids[k] == bus_id) return k;
        fail("bus " + std::to_string(bus_id) + " not in sensitivity index");
    };

    // Injection vectors per phase (pu) and each trade's legs.
    std::array<Eigen::VectorXd, 3> dp;
    for (int ph = 0; ph < 3; ++ph) dp[ph] = Eigen::VectorXd::Zero(nn);
    struct Leg {
        int phase;
        int node;
        double inj; // pu, signed
    };
    std::vector<std::array<Leg, 2>> legs(nt);
    for (int t = 0; t < nt; ++t) {
        const Trade& tr = block.trades[t];
        const double q = quantity_kw[t] / s_base;
        legs[t][0] = {static_cast<int>(tr.producer_phase), node_pos(tr.producer_bus), +q};
        legs[t][1] = {static_cast<int>(tr.consumer_phase), node_pos(tr.consumer_bus), -q};
        dp[legs[t][0].phase][legs[t][0].node] += q;
        dp[legs[t][1].phase][legs[t][1].node] -= q;
    }

    // Per (phase, line) slot: gradient evaluated at the block injection plus
    // that line's incremental loss. Slots are independent; the OpenMP path
    // fills them concurrently and the reduction below stays in fixed order.
    std::vector<Eigen::VectorXd> grads(3 * nl);
    std::vector<double> line_loss(3 * nl, 0.0);
    const auto fill_slot = [&](int slot) {
        const int ph = slot / nl;
        const int l = slot % nl;
        grads[slot] = line_loss_gradient(base, l, static_cast<Phase>(ph), dp[ph]);
        const Line& line = base.grid.lines[l];
        const LineResponse r = line_response(base, line, static_cast<Phase>(ph), dp[ph]);
        const double z2 = line.r * line.r + line.x * line.x;
        line_loss[slot] = line.r * std::norm(r.c + Complex(0, 1) * r.d) / z2;
    };
    if (exec == Exec::openmp) {
#pragma omp parallel for schedule(static)
        for (int slot = 0; slot < 3 * nl; ++slot) fill_slot(slot);
    } else {
        for (int slot = 0; slot < 3 * nl; ++slot) fill_slot(slot);
    }

    TlcReport report;
    report.trades.assign(nt, TlcEntry{});
    for (int slot = 0; slot < 3 * nl; ++slot) {
        const int ph = slot / nl;
        for (int t = 0; t < nt; ++t) {
            for (int leg = 0; leg < 2; ++leg) {
                const Leg& lg = legs[t][leg];
                if (lg.phase != ph) continue;
                const double share = grads[slot][lg.node] * lg.inj * s_base;
                if (leg == 0)
                    report.trades[t].producer_kw += share;
                else
                    report.trades[t].consumer_kw += share;
            }
        }
        report.incremental_loss_kw += line_loss[slot] * s_base;
        if (verbose)
            report.lines.push_back(
                {slot % nl, static_cast<Phase>(ph), line_loss[slot] * s_base});
    }
    for (const TlcEntry& e : report.trades) report.total_kw += e.total();
    return report;
}

} // namespace p2pflow
