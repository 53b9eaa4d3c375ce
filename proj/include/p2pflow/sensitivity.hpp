#pragma once

#include <vector>

#include <Eigen/Dense>

#include "p2pflow/common.hpp"
#include "p2pflow/powerflow.hpp"

namespace p2pflow {

/// Active-power-only voltage sensitivities for one phase, anchored at the
/// phase's base case. Rows/columns follow bus_ids (slack excluded).
struct SensitivityModel {
    Phase phase = Phase::a;
    Eigen::MatrixXd s_v;     // d|V|/dP, pu/pu
    Eigen::MatrixXd s_delta; // ddelta/dP, rad/pu
    Eigen::VectorXd vm;      // base |V| over non-slack buses
    Eigen::VectorXd va;      // base angle over non-slack buses, radians
    std::vector<int> bus_ids;

    int count() const { return static_cast<int>(bus_ids.size()); }
};

struct SequenceTriple {
    Complex zero;
    Complex positive;
    Complex negative;
};

/// Rotation operator 1 at 120 degrees.
Complex rotation_a();

SensitivityModel reduce_sensitivities(const GridModel& grid, const Jacobian& jac,
                                      const PhaseSolution& sol);

/// Complex nodal voltage change for an active-power injection vector dP
/// (per-unit, slack excluded): dV_n = (S_V dP + j |V_n| S_delta dP)_n e^{j delta_n}.
Eigen::VectorXcd predict_voltage_change(const SensitivityModel& model,
                                        const Eigen::VectorXd& dp);

SequenceTriple sequence_components(Complex va, Complex vb, Complex vc);

/// Voltage unbalance factor |V2/V1| in percent.
double vuf(const SequenceTriple& seq);

} // namespace p2pflow
