#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "p2pflow/common.hpp"
#include "p2pflow/netmodel.hpp"

namespace p2pflow {

/// Converged per-phase power-flow state. Voltages indexed by bus position in
/// GridModel::buses (slack included).
struct PhaseSolution {
    Phase phase = Phase::a;
    Eigen::VectorXd vm;       // |V| per bus, per-unit
    Eigen::VectorXd va;       // angle per bus, radians
    double slack_p = 0.0;     // slack active injection, per-unit
    double slack_q = 0.0;     // slack reactive injection, per-unit
    int iterations = 0;
    double mismatch = 0.0;    // final infinity-norm mismatch
    double tol = 0.0;

    Complex voltage(int bus_index) const {
        return std::polar(vm[bus_index], va[bus_index]);
    }
};

/// Dense power-flow Jacobian over non-slack buses, |V|-columns first.
struct Jacobian {
    Eigen::MatrixXd j_pv; // dP/d|V|
    Eigen::MatrixXd j_pd; // dP/ddelta
    Eigen::MatrixXd j_qv; // dQ/d|V|
    Eigen::MatrixXd j_qd; // dQ/ddelta
    std::vector<int> bus_ids; // row/column order (slack excluded)
};

/// Per-line electrical state for one phase.
struct BranchState {
    Phase phase = Phase::a;
    std::vector<Complex> current;  // from->to, per-unit
    std::vector<Complex> s_send;   // complex power at sending end
    std::vector<Complex> s_recv;   // complex power at receiving end
    std::vector<double> loss;      // active loss R|I|^2, per-unit
    double total_loss = 0.0;
};

struct PowerFlowOptions {
    double tol = 1e-10;
    int max_iter = 50;
};

Complex default_slack_phasor(Phase phase);

PhaseSolution solve_phase(const GridModel& grid, Phase phase, Complex slack_phasor,
                          const PowerFlowOptions& opts = {});

/// Solves all three phases over the shared grid. The solves are independent;
/// the OpenMP path runs them concurrently and is bit-identical to serial.
std::array<PhaseSolution, 3> solve_all_phases(const GridModel& grid,
                                              const PowerFlowOptions& opts = {},
                                              Exec exec = Exec::openmp);

Jacobian assemble_jacobian(const GridModel& grid, const PhaseSolution& sol);

BranchState branch_quantities(const GridModel& grid, const PhaseSolution& sol);

/// Nodal admittance matrix from series impedances (no shunts).
Eigen::MatrixXcd admittance_matrix(const GridModel& grid);

} // namespace p2pflow
