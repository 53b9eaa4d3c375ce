#include "p2pflow/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace p2pflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("evaluator", msg); }

std::string trade_desc(const Trade& t) {
    std::ostringstream os;
    os << t.producer_bus << phase_letter(t.producer_phase) << "->" << t.consumer_bus
       << phase_letter(t.consumer_phase);
    return os.str();
}

void validate_block(const BaseCase& base, const TradeBlock& block, EvalMode mode) {
    for (size_t i = 0; i < block.trades.size(); ++i) {
        const Trade& t = block.trades[i];
        const std::string where = "trade " + std::to_string(i) + " (" + trade_desc(t) + ")";
        if (!base.grid.has_bus(t.producer_bus))
            fail(where + " references unknown bus " + std::to_string(t.producer_bus));
        if (!base.grid.has_bus(t.consumer_bus))
            fail(where + " references unknown bus " + std::to_string(t.consumer_bus));
        if (t.producer_bus == base.grid.slack_id || t.consumer_bus == base.grid.slack_id)
            fail(where + ": slack bus cannot participate in trades");
        if (t.producer_bus == t.consumer_bus && t.producer_phase == t.consumer_phase)
            fail(where + ": producer and consumer coincide");
        if (t.quantity_kw && *t.quantity_kw <= 0.0) fail(where + ": quantity must be positive");
        if (mode == EvalMode::vetting && !t.quantity_kw)
            fail(where + ": vetting requires a negotiated quantity");
    }
}

} // namespace

void Limits::validate() const {
    if (alpha && (*alpha < 0.0 || *alpha > 1.0)) fail("alpha must lie in [0, 1] or be disabled");
    if (dv_max < 0.0) fail("dv_max must be non-negative");
    if (di_headroom < 0.0) fail("di_headroom must be non-negative");
    if (i_floor < 0.0) fail("i_floor must be non-negative");
}

const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::accepted: return "accepted";
    case Verdict::curtailed: return "curtailed";
    case Verdict::rejected: return "rejected";
    }
    return "?";
}

BaseCase build_base_case(const GridModel& grid_pu, const PowerFlowOptions& opts, Exec exec) {
    if (!grid_pu.is_per_unit()) fail("base case requires a per-unit grid");
    grid_pu.validate();
    BaseCase base;
    base.grid = grid_pu;
    base.sol = solve_all_phases(grid_pu, opts, exec);
    for (int ph = 0; ph < 3; ++ph) {
        base.sens[ph] = reduce_sensitivities(grid_pu, assemble_jacobian(grid_pu, base.sol[ph]),
                                             base.sol[ph]);
        base.branch[ph] = branch_quantities(grid_pu, base.sol[ph]);
    }
    return base;
}

TradeBlock parse_trades_csv(const std::string& text) {
    TradeBlock block;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            if (line.find("producer_bus") != std::string::npos) continue;
        }
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) {
            size_t b = cell.find_first_not_of(" \t");
            size_t e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        if (cells.size() < 4) fail("trades file line " + std::to_string(lineno) + ": expected "
                                   "producer_bus,producer_phase,consumer_bus,consumer_phase[,quantity_kw,price]");
        Trade t;
        t.producer_bus = std::stoi(cells[0]);
        t.producer_phase = phase_from_letter(cells[1].at(0));
        t.consumer_bus = std::stoi(cells[2]);
        t.consumer_phase = phase_from_letter(cells[3].at(0));
        if (cells.size() > 4 && !cells[4].empty()) t.quantity_kw = std::stod(cells[4]);
        if (cells.size() > 5 && !cells[5].empty()) t.price = std::stod(cells[5]);
        block.trades.push_back(t);
    }
    return block;
}

TradeBlock parse_trades_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open trades file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_trades_csv(ss.str());
}

BlockProgram build_block_program(const BaseCase& base, const TradeBlock& block,
                                 const Limits& limits, EvalMode mode) {
    limits.validate();
    validate_block(base, block, mode);
    const int nt = static_cast<int>(block.trades.size());
    const SensitivityModel& ref = base.sens[0];
    const int nn = ref.count();
    const double s_base = base.s_base_kva();

    BlockProgram bp;
    bp.node_ids = ref.bus_ids;

    // Complex voltage response of each node to each trade, per phase:
    // column t of vhat[ph] is the phasor dV per unit q_t.
    std::array<Eigen::MatrixXcd, 3> vhat;
    std::array<Eigen::MatrixXd, 3> sv_resp;
    for (int ph = 0; ph < 3; ++ph) {
        vhat[ph] = Eigen::MatrixXcd::Zero(nn, nt);
        sv_resp[ph] = Eigen::MatrixXd::Zero(nn, nt);
        bp.injection[ph] = Eigen::MatrixXd::Zero(nn, nt);
    }
    const auto node_pos = [&](int bus_id) {
        for (int k = 0; k < nn; ++k)
            if (ref.bus_ids[k] == bus_id) return k;
        fail("bus " + std::to_string(bus_id) + " not in sensitivity index");
    };
    for (int t = 0; t < nt; ++t) {
        const Trade& tr = block.trades[t];
        const auto leg = [&](int bus, Phase phase, double sign) {
            const int ph = static_cast<int>(phase);
            const SensitivityModel& m = base.sens[ph];
            const int k = node_pos(bus);
            bp.injection[ph](k, t) += sign;
            for (int n = 0; n < nn; ++n) {
                const Complex rect(m.s_v(n, k), m.vm[n] * m.s_delta(n, k));
                vhat[ph](n, t) += sign * rect * std::polar(1.0, m.va[n]);
                sv_resp[ph](n, t) += sign * m.s_v(n, k);
            }
        };
        leg(tr.producer_bus, tr.producer_phase, +1.0);
        leg(tr.consumer_bus, tr.consumer_phase, -1.0);
    }

    ConicProgram& prog = bp.program;
    prog.n = nt;
    prog.c = Eigen::VectorXd::Ones(nt); // maximize total traded power
    prog.lo = Eigen::VectorXd::Zero(nt);
    if (mode == EvalMode::vetting) {
        prog.hi.resize(nt);
        for (int t = 0; t < nt; ++t) prog.hi[t] = *block.trades[t].quantity_kw / s_base;
    }

    // Voltage-magnitude deviation bounds: two rows per phase and node.
    prog.a_in.resize(2 * 3 * nn, nt);
    prog.b_in.resize(2 * 3 * nn);
    int row = 0;
    for (int ph = 0; ph < 3; ++ph) {
        for (int n = 0; n < nn; ++n) {
            const std::string node_tag = std::string(1, "abc"[ph]) + ":" +
                                         std::to_string(ref.bus_ids[n]);
            prog.a_in.row(row) = sv_resp[ph].row(n);
            prog.b_in[row] = limits.dv_max;
            bp.ineq_tags.push_back("dv:" + node_tag + ":upper");
            ++row;
            prog.a_in.row(row) = -sv_resp[ph].row(n);
            prog.b_in[row] = limits.dv_max;
            bp.ineq_tags.push_back("dv:" + node_tag + ":lower");
            ++row;
        }
    }

    const Complex a1 = rotation_a();
    const Complex a2 = a1 * a1;

    // Voltage-unbalance cones, one per node, when the bound is enabled.
    if (limits.alpha) {
        const double alpha = *limits.alpha;
        for (int n = 0; n < nn; ++n) {
            const int idx = base.grid.bus_index(ref.bus_ids[n]);
            const SequenceTriple seq = sequence_components(base.sol[0].voltage(idx),
                                                           base.sol[1].voltage(idx),
                                                           base.sol[2].voltage(idx));
            Eigen::RowVectorXcd w(nt);
            for (int t = 0; t < nt; ++t) {
                const Complex dv2 =
                    (vhat[0](n, t) + a2 * vhat[1](n, t) + a1 * vhat[2](n, t)) / 3.0;
                const Complex dv1 =
                    (vhat[0](n, t) + a1 * vhat[1](n, t) + a2 * vhat[2](n, t)) / 3.0;
                w[t] = dv2 - alpha * dv1;
            }
            SocConstraint soc;
            soc.G.resize(2, nt);
            soc.G.row(0) = w.real();
            soc.G.row(1) = w.imag();
            soc.h = Eigen::VectorXd::Zero(2);
            soc.e = std::abs(alpha * seq.positive - seq.negative);
            prog.socs.push_back(std::move(soc));
            bp.soc_tags.push_back("vuf:" + std::to_string(ref.bus_ids[n]));
        }
    }

    // Congestion cones, one per line and phase.
    for (int ph = 0; ph < 3; ++ph) {
        for (size_t l = 0; l < base.grid.lines.size(); ++l) {
            const Line& ln = base.grid.lines[l];
            Eigen::RowVectorXcd u = Eigen::RowVectorXcd::Zero(nt);
            if (ln.from != base.grid.slack_id) u += vhat[ph].row(node_pos(ln.from));
            if (ln.to != base.grid.slack_id) u -= vhat[ph].row(node_pos(ln.to));
            const double i_base = std::abs(base.branch[ph].current[l]);
            const double di_max = std::max(limits.di_headroom * i_base, limits.i_floor);
            SocConstraint soc;
            soc.G.resize(2, nt);
            soc.G.row(0) = u.real();
            soc.G.row(1) = u.imag();
            soc.h = Eigen::VectorXd::Zero(2);
            soc.e = std::hypot(ln.r, ln.x) * di_max;
            prog.socs.push_back(std::move(soc));
            bp.soc_tags.push_back(std::string("cong:") + "abc"[ph] + ":" +
                                  std::to_string(ln.from) + "-" + std::to_string(ln.to));
        }
    }
    return bp;
}

namespace {

BlockEvaluation run_evaluation(const BaseCase& base, const TradeBlock& block,
                               const Limits& limits, EvalMode mode, const EvalOptions& opts) {
    BlockProgram bp = build_block_program(base, block, limits, mode);
    const ConicSolver solver =
        opts.solver ? opts.solver
                    : [](const ConicProgram& p, const SolveOptions& o) { return solve_conic(p, o); };
    ConicSolution sol = solver(bp.program, opts.socp);

    BlockEvaluation ev;
    ev.solver_status = sol.status;
    ev.solver_message = sol.message.empty() ? to_string(sol.status) : sol.message;
    ev.solver_iterations = sol.iterations;
    if (sol.status != SolveStatus::optimal) return ev;

    // Optional second pass: at the optimal total, maximize the worst
    // per-trade fill ratio (keeps the total, balances the split).
    if (opts.max_min_split && block.size() >= 2) {
        const int nt = static_cast<int>(block.size());
        ConicProgram second = bp.program;
        second.n = nt + 1;
        second.c = Eigen::VectorXd::Zero(nt + 1);
        second.c[nt] = 1.0;
        const auto widen = [&](Eigen::MatrixXd& m) {
            if (m.size() == 0) return;
            m.conservativeResize(Eigen::NoChange, nt + 1);
            m.col(nt).setZero();
        };
        widen(second.a_in);
        for (SocConstraint& soc : second.socs) {
            widen(soc.G);
            if (soc.d.size() > 0) {
                soc.d.conservativeResize(nt + 1);
                soc.d[nt] = 0.0;
            }
        }
        second.lo.conservativeResize(nt + 1);
        second.lo[nt] = 0.0;
        if (second.hi.size() > 0) {
            second.hi.conservativeResize(nt + 1);
            second.hi[nt] = std::numeric_limits<double>::infinity();
        }
        second.a_eq.resize(1, nt + 1);
        second.a_eq.setZero();
        second.a_eq.leftCols(nt).setOnes();
        second.b_eq = Eigen::VectorXd::Constant(1, sol.x.head(nt).sum());
        // m <= q_t / ref_t  ->  -q_t + ref_t m <= 0
        Eigen::MatrixXd extra(nt, nt + 1);
        extra.setZero();
        for (int t = 0; t < nt; ++t) {
            extra(t, t) = -1.0;
            extra(t, nt) = block.trades[t].quantity_kw ? *block.trades[t].quantity_kw : 1.0;
        }
        const int old_rows = static_cast<int>(second.a_in.rows());
        second.a_in.conservativeResize(old_rows + nt, nt + 1);
        second.a_in.bottomRows(nt) = extra;
        second.b_in.conservativeResize(old_rows + nt);
        second.b_in.tail(nt).setZero();
        const ConicSolution balanced = solver(second, opts.socp);
        if (balanced.status == SolveStatus::optimal) {
            // keep the original slack/dual bookkeeping rows only
            sol.x = balanced.x.head(nt);
            sol.ineq_slack = balanced.ineq_slack.head(old_rows);
            sol.ineq_dual = balanced.ineq_dual.head(old_rows);
            sol.soc_slack = balanced.soc_slack;
            sol.soc_dual = balanced.soc_dual;
        }
    }

    const double s_base = base.s_base_kva();
    const int nt = static_cast<int>(block.size());
    ev.quantity_kw.resize(nt);
    for (int t = 0; t < nt; ++t) ev.quantity_kw[t] = std::max(0.0, sol.x[t]) * s_base;
    ev.total_kw = 0.0;
    for (double q : ev.quantity_kw) ev.total_kw += q;

    // Binding constraints: slack at most binding_tol (absolute, pu scale).
    std::vector<int> binding_rows, binding_socs;
    for (int i = 0; i < sol.ineq_slack.size(); ++i)
        if (sol.ineq_slack[i] <= opts.binding_tol) {
            ev.binding.push_back(bp.ineq_tags[i]);
            binding_rows.push_back(i);
        }
    for (size_t k = 0; k < sol.soc_slack.size(); ++k)
        if (sol.soc_slack[k] <= opts.binding_tol) {
            ev.binding.push_back(bp.soc_tags[k]);
            binding_socs.push_back(static_cast<int>(k));
        }

    // Dominant binding tag per trade: the active constraint with the largest
    // coefficient on that trade's variable.
    ev.binding_per_trade.assign(nt, "-");
    for (int t = 0; t < nt; ++t) {
        double best = 1e-9;
        for (int i : binding_rows) {
            const double coef = std::abs(bp.program.a_in(i, t));
            if (coef > best) {
                best = coef;
                ev.binding_per_trade[t] = bp.ineq_tags[i];
            }
        }
        for (int k : binding_socs) {
            const auto& g = bp.program.socs[k].G;
            const double coef = std::hypot(g(0, t), g(1, t));
            if (coef > best) {
                best = coef;
                ev.binding_per_trade[t] = bp.soc_tags[k];
            }
        }
    }

    if (mode == EvalMode::vetting) {
        ev.verdicts.resize(nt);
        for (int t = 0; t < nt; ++t) {
            const double negotiated = *block.trades[t].quantity_kw;
            double q = std::min(ev.quantity_kw[t], negotiated);
            if (q >= negotiated * (1.0 - 1e-6)) {
                ev.verdicts[t] = Verdict::accepted;
                q = negotiated;
            } else if (q <= std::max(1e-9 * s_base, negotiated * 1e-6)) {
                ev.verdicts[t] = Verdict::rejected;
                q = 0.0;
            } else {
                ev.verdicts[t] = Verdict::curtailed;
            }
            ev.quantity_kw[t] = q;
            if (ev.verdicts[t] == Verdict::accepted && ev.binding_per_trade[t] == "-")
                ev.binding_per_trade[t] = "negotiated";
        }
        ev.total_kw = 0.0;
        for (double q : ev.quantity_kw) ev.total_kw += q;
    }
    return ev;
}

} // namespace

BlockEvaluation evaluate_capacity(const BaseCase& base, const TradeBlock& block,
                                  const Limits& limits, const EvalOptions& opts) {
    return run_evaluation(base, block, limits, EvalMode::capacity, opts);
}

BlockEvaluation vet_block(const BaseCase& base, const TradeBlock& block, const Limits& limits,
                          const EvalOptions& opts) {
    return run_evaluation(base, block, limits, EvalMode::vetting, opts);
}

std::vector<FrontierPoint> frontier_sweep(const BaseCase& base, const TradeBlock& block,
                                          const Limits& limits, int target_index,
                                          const std::vector<double>& others_totals_kw,
                                          const EvalOptions& opts, Exec exec) {
    if (block.size() < 2) fail("frontier sweep needs at least two trades");
    if (target_index < 0 || target_index >= static_cast<int>(block.size()))
        fail("target trade index out of range");
    const int nt = static_cast<int>(block.size());
    const double s_base = base.s_base_kva();

    // proportional shares for the non-target trades
    std::vector<double> weight(nt, 0.0);
    double wsum = 0.0;
    for (int t = 0; t < nt; ++t) {
        if (t == target_index) continue;
        weight[t] = block.trades[t].quantity_kw ? *block.trades[t].quantity_kw : 1.0;
        wsum += weight[t];
    }
    for (int t = 0; t < nt; ++t) weight[t] /= wsum;

    const BlockProgram bp = build_block_program(base, block, limits, EvalMode::capacity);
    const ConicSolver solver =
        opts.solver ? opts.solver
                    : [](const ConicProgram& p, const SolveOptions& o) { return solve_conic(p, o); };

    std::vector<FrontierPoint> curve(others_totals_kw.size());
    const auto run_point = [&](int i) {
        ConicProgram prog = bp.program;
        prog.c.setZero();
        prog.c[target_index] = 1.0;
        prog.hi = Eigen::VectorXd::Constant(nt, std::numeric_limits<double>::infinity());
        const double total_pu = others_totals_kw[i] / s_base;
        for (int t = 0; t < nt; ++t) {
            if (t == target_index) continue;
            const double fixed = weight[t] * total_pu;
            prog.lo[t] = fixed;
            prog.hi[t] = fixed;
        }
        const ConicSolution sol = solver(prog, opts.socp);
        curve[i].others_total_kw = others_totals_kw[i];
        curve[i].target_max_kw =
            sol.status == SolveStatus::optimal ? std::max(0.0, sol.x[target_index]) * s_base : 0.0;
    };
    const int npts = static_cast<int>(others_totals_kw.size());
    if (exec == Exec::openmp) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < npts; ++i) run_point(i);
    } else {
        for (int i = 0; i < npts; ++i) run_point(i);
    }
    return curve;
}

GridModel grid_with_injections(const GridModel& grid_pu, const TradeBlock& block,
                               const std::vector<double>& quantity_kw) {
    if (!grid_pu.is_per_unit()) fail("grid_with_injections requires a per-unit grid");
    if (quantity_kw.size() != block.size()) fail("quantity/block size mismatch");
    GridModel g = grid_pu;
    const double s_base = g.bases->s_kva;
    for (size_t t = 0; t < block.size(); ++t) {
        const Trade& tr = block.trades[t];
        const double q = quantity_kw[t] / s_base;
        g.buses[g.bus_index(tr.producer_bus)].load[static_cast<int>(tr.producer_phase)].p -= q;
        g.buses[g.bus_index(tr.consumer_bus)].load[static_cast<int>(tr.consumer_phase)].p += q;
    }
    return g;
}

} // namespace p2pflow
