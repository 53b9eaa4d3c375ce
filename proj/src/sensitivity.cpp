#include "p2pflow/sensitivity.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace p2pflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("sensitivity", msg); }

std::string conditioning(const Eigen::FullPivLU<Eigen::MatrixXd>& lu) {
    const auto& u = lu.matrixLU();
    double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < u.rows(); ++i) {
        const double d = std::abs(u(i, i));
        dmax = std::max(dmax, d);
        dmin = std::min(dmin, d);
    }
    std::ostringstream os;
    os << "pivot ratio " << (dmax > 0.0 ? dmin / dmax : 0.0);
    return os.str();
}

} // namespace

Complex rotation_a() { return std::polar(1.0, 2.0 * std::numbers::pi / 3.0); }

SensitivityModel reduce_sensitivities(const GridModel& grid, const Jacobian& jac,
                                      const PhaseSolution& sol) {
    const int m = static_cast<int>(jac.bus_ids.size());
    if (jac.j_pv.rows() != m || jac.j_pd.rows() != m || jac.j_qv.rows() != m ||
        jac.j_qd.rows() != m)
        fail("inconsistent Jacobian blocks");
    if (sol.vm.size() != m + 1) fail("solution does not match Jacobian dimensions");

    Eigen::FullPivLU<Eigen::MatrixXd> lu_qd(jac.j_qd);
    if (!lu_qd.isInvertible()) fail("singular J_Qdelta block (" + conditioning(lu_qd) + ")");
    // Schur complement of the reactive block: J_PV - J_Pd J_Qd^-1 J_QV
    const Eigen::MatrixXd qd_inv_qv = lu_qd.solve(jac.j_qv);
    const Eigen::MatrixXd schur = jac.j_pv - jac.j_pd * qd_inv_qv;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_schur(schur);
    if (!lu_schur.isInvertible()) fail("singular Schur complement (" + conditioning(lu_schur) + ")");

    SensitivityModel model;
    model.phase = sol.phase;
    model.bus_ids = jac.bus_ids;
    model.s_v = lu_schur.solve(Eigen::MatrixXd::Identity(m, m));
    model.s_delta = -qd_inv_qv * model.s_v;
    model.vm.resize(m);
    model.va.resize(m);
    for (int k = 0; k < m; ++k) {
        const int idx = grid.bus_index(jac.bus_ids[k]);
        model.vm[k] = sol.vm[idx];
        model.va[k] = sol.va[idx];
    }
    return model;
}

Eigen::VectorXcd predict_voltage_change(const SensitivityModel& model,
                                        const Eigen::VectorXd& dp) {
    const int m = model.count();
    if (dp.size() != m) fail("dP dimension mismatch: expected " + std::to_string(m));
    const Eigen::VectorXd dvm = model.s_v * dp;
    const Eigen::VectorXd dva = model.s_delta * dp;
    Eigen::VectorXcd dv(m);
    for (int i = 0; i < m; ++i) {
        const Complex rect(dvm[i], model.vm[i] * dva[i]);
        dv[i] = rect * std::polar(1.0, model.va[i]);
    }
    return dv;
}

SequenceTriple sequence_components(Complex va, Complex vb, Complex vc) {
    const Complex a = rotation_a();
    const Complex a2 = a * a;
    SequenceTriple seq;
    seq.zero = (va + vb + vc) / 3.0;
    seq.positive = (va + a * vb + a2 * vc) / 3.0;
    seq.negative = (va + a2 * vb + a * vc) / 3.0;
    return seq;
}

double vuf(const SequenceTriple& seq) {
    const double v1 = std::abs(seq.positive);
    if (v1 <= 0.0) fail("zero positive-sequence voltage");
    return std::abs(seq.negative) / v1 * 100.0;
}

} // namespace p2pflow
