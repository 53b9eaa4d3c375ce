#include "p2pflow/powerflow.hpp"

#include <cmath>
#include <numbers>

namespace p2pflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("powerflow", msg); }

// P_i = sum_j |V_i||V_j||Y_ij| cos(delta_i - delta_j - theta_ij)
// Q_i = sum_j |V_i||V_j||Y_ij| sin(delta_i - delta_j - theta_ij)
void injections(const Eigen::MatrixXcd& ybus, const Eigen::VectorXd& vm,
                const Eigen::VectorXd& va, Eigen::VectorXd& p, Eigen::VectorXd& q) {
    const int n = static_cast<int>(vm.size());
    p.setZero(n);
    q.setZero(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const Complex y = ybus(i, j);
            if (y == Complex(0.0, 0.0)) continue;
            const double ym = std::abs(y);
            const double th = std::arg(y);
            const double ang = va[i] - va[j] - th;
            p[i] += vm[i] * vm[j] * ym * std::cos(ang);
            q[i] += vm[i] * vm[j] * ym * std::sin(ang);
        }
    }
}

// Jacobian blocks over an arbitrary bus subset `rows` (same set for columns).
void jacobian_blocks(const Eigen::MatrixXcd& ybus, const Eigen::VectorXd& vm,
                     const Eigen::VectorXd& va, const std::vector<int>& rows,
                     Eigen::MatrixXd& j_pv, Eigen::MatrixXd& j_pd,
                     Eigen::MatrixXd& j_qv, Eigen::MatrixXd& j_qd) {
    const int m = static_cast<int>(rows.size());
    const int n = static_cast<int>(vm.size());
    j_pv.setZero(m, m);
    j_pd.setZero(m, m);
    j_qv.setZero(m, m);
    j_qd.setZero(m, m);
    for (int r = 0; r < m; ++r) {
        const int i = rows[r];
        const double yii = std::abs(ybus(i, i));
        const double thii = std::arg(ybus(i, i));
        double pv_diag = 2.0 * vm[i] * yii * std::cos(thii);
        double qv_diag = -2.0 * vm[i] * yii * std::sin(thii);
        double pd_diag = 0.0;
        double qd_diag = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const Complex y = ybus(i, j);
            if (y == Complex(0.0, 0.0)) continue;
            const double ym = std::abs(y);
            const double th = std::arg(y);
            const double ang = th - va[i] + va[j];
            pv_diag += vm[j] * ym * std::cos(ang);
            qv_diag -= vm[j] * ym * std::sin(ang);
            pd_diag += vm[i] * vm[j] * ym * std::sin(ang);
            qd_diag += vm[i] * vm[j] * ym * std::cos(ang);
        }
        j_pv(r, r) = pv_diag;
        j_qv(r, r) = qv_diag;
        j_pd(r, r) = pd_diag;
        j_qd(r, r) = qd_diag;
        for (int s = 0; s < m; ++s) {
            if (s == r) continue;
            const int j = rows[s];
            const Complex y = ybus(i, j);
            if (y == Complex(0.0, 0.0)) continue;
            const double ym = std::abs(y);
            const double th = std::arg(y);
            const double ang = th - va[i] + va[j];
            j_pv(r, s) = vm[i] * ym * std::cos(ang);
            j_qv(r, s) = -vm[i] * ym * std::sin(ang);
            j_pd(r, s) = -vm[i] * vm[j] * ym * std::sin(ang);
            j_qd(r, s) = -vm[i] * vm[j] * ym * std::cos(ang);
        }
    }
}

} // namespace

Eigen::MatrixXcd admittance_matrix(const GridModel& grid) {
    const int n = static_cast<int>(grid.buses.size());
    Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(n, n);
    for (const Line& l : grid.lines) {
        const int i = grid.bus_index(l.from);
        const int j = grid.bus_index(l.to);
        const Complex y = 1.0 / Complex(l.r, l.x);
        ybus(i, i) += y;
        ybus(j, j) += y;
        ybus(i, j) -= y;
        ybus(j, i) -= y;
    }
    return ybus;
}

Complex default_slack_phasor(Phase phase) {
    constexpr double deg120 = 2.0 * std::numbers::pi / 3.0;
    switch (phase) {
    case Phase::a: return std::polar(1.0, 0.0);
    case Phase::b: return std::polar(1.0, -deg120);
    case Phase::c: return std::polar(1.0, deg120);
    }
    return {1.0, 0.0};
}

PhaseSolution solve_phase(const GridModel& grid, Phase phase, Complex slack_phasor,
                          const PowerFlowOptions& opts) {
    if (!grid.is_per_unit()) fail("solve_phase requires a per-unit grid");
    if (opts.tol <= 0.0) fail("tolerance must be positive");
    if (std::abs(slack_phasor) <= 0.0) fail("slack phasor magnitude must be positive");

    const int n = static_cast<int>(grid.buses.size());
    const int slack = grid.bus_index(grid.slack_id);
    const Eigen::MatrixXcd ybus = admittance_matrix(grid);

    std::vector<int> pq; // non-slack bus indices, document order
    pq.reserve(n - 1);
    for (int i = 0; i < n; ++i)
        if (i != slack) pq.push_back(i);
    const int m = static_cast<int>(pq.size());

    // Specified injections: loads enter as negative injections.
    Eigen::VectorXd p_spec(n), q_spec(n);
    for (int i = 0; i < n; ++i) {
        const PhaseLoad& ld = grid.buses[i].load[static_cast<int>(phase)];
        p_spec[i] = -ld.p;
        q_spec[i] = -ld.q;
    }

    PhaseSolution sol;
    sol.phase = phase;
    sol.tol = opts.tol;
    sol.vm = Eigen::VectorXd::Constant(n, 1.0);
    sol.va = Eigen::VectorXd::Constant(n, std::arg(slack_phasor));
    sol.vm[slack] = std::abs(slack_phasor);

    Eigen::VectorXd p(n), q(n);
    Eigen::MatrixXd j_pv, j_pd, j_qv, j_qd;
    double prev_norm = std::numeric_limits<double>::infinity();
    int growth_streak = 0;

    for (int iter = 0;; ++iter) {
        injections(ybus, sol.vm, sol.va, p, q);
        Eigen::VectorXd rhs(2 * m);
        double norm = 0.0;
        for (int r = 0; r < m; ++r) {
            rhs[r] = p_spec[pq[r]] - p[pq[r]];
            rhs[m + r] = q_spec[pq[r]] - q[pq[r]];
            norm = std::max({norm, std::abs(rhs[r]), std::abs(rhs[m + r])});
        }
        sol.iterations = iter;
        sol.mismatch = norm;
        if (norm <= opts.tol) break;
        if (iter >= opts.max_iter)
            fail("did not converge within " + std::to_string(opts.max_iter) +
                 " iterations (mismatch " + std::to_string(norm) + ")");
        if (norm > prev_norm) {
            if (++growth_streak >= 5) fail("diverging: mismatch grew over 5 consecutive iterations");
        } else {
            growth_streak = 0;
        }
        prev_norm = norm;

        jacobian_blocks(ybus, sol.vm, sol.va, pq, j_pv, j_pd, j_qv, j_qd);
        Eigen::MatrixXd jac(2 * m, 2 * m);
        jac.topLeftCorner(m, m) = j_pv;
        jac.topRightCorner(m, m) = j_pd;
        jac.bottomLeftCorner(m, m) = j_qv;
        jac.bottomRightCorner(m, m) = j_qd;

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const Eigen::VectorXd dx = lu.solve(rhs);
        if (!dx.allFinite()) fail("singular Jacobian during iteration " + std::to_string(iter));
        for (int r = 0; r < m; ++r) {
            sol.vm[pq[r]] += dx[r];
            sol.va[pq[r]] += dx[m + r];
        }
        for (int r = 0; r < m; ++r)
            if (sol.vm[pq[r]] <= 0.0) fail("voltage collapsed to non-positive magnitude");
    }

    sol.slack_p = p[slack];
    sol.slack_q = q[slack];
    return sol;
}

std::array<PhaseSolution, 3> solve_all_phases(const GridModel& grid,
                                              const PowerFlowOptions& opts, Exec exec) {
    std::array<PhaseSolution, 3> sols;
    std::array<std::exception_ptr, 3> errors{};
    const auto solve_one = [&](int ph) {
        try {
            const Phase phase = static_cast<Phase>(ph);
            sols[ph] = solve_phase(grid, phase, default_slack_phasor(phase), opts);
        } catch (...) {
            errors[ph] = std::current_exception();
        }
    };
    if (exec == Exec::openmp) {
#pragma omp parallel for schedule(static)
        for (int ph = 0; ph < 3; ++ph) solve_one(ph);
    } else {
        for (int ph = 0; ph < 3; ++ph) solve_one(ph);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return sols;
}

Jacobian assemble_jacobian(const GridModel& grid, const PhaseSolution& sol) {
    if (sol.mismatch > sol.tol) fail("assemble_jacobian requires a converged solution");
    const int n = static_cast<int>(grid.buses.size());
    const int slack = grid.bus_index(grid.slack_id);
    std::vector<int> pq;
    for (int i = 0; i < n; ++i)
        if (i != slack) pq.push_back(i);
    const Eigen::MatrixXcd ybus = admittance_matrix(grid);
    Jacobian jac;
    jacobian_blocks(ybus, sol.vm, sol.va, pq, jac.j_pv, jac.j_pd, jac.j_qv, jac.j_qd);
    if (!jac.j_pv.allFinite() || !jac.j_pd.allFinite() || !jac.j_qv.allFinite() ||
        !jac.j_qd.allFinite())
        fail("non-finite Jacobian entries");
    for (int i : pq) jac.bus_ids.push_back(grid.buses[i].id);
    return jac;
}

BranchState branch_quantities(const GridModel& grid, const PhaseSolution& sol) {
    if (sol.mismatch > sol.tol) fail("branch_quantities requires a converged solution");
    BranchState bs;
    bs.phase = sol.phase;
    bs.current.reserve(grid.lines.size());
    for (const Line& l : grid.lines) {
        const int i = grid.bus_index(l.from);
        const int j = grid.bus_index(l.to);
        const Complex vi = sol.voltage(i);
        const Complex vj = sol.voltage(j);
        const Complex z(l.r, l.x);
        const Complex cur = (vi - vj) / z;
        bs.current.push_back(cur);
        bs.s_send.push_back(vi * std::conj(cur));
        bs.s_recv.push_back(vj * std::conj(cur));
        const double loss = l.r * std::norm(cur);
        bs.loss.push_back(loss);
        bs.total_loss += loss;
    }
    return bs;
}

} // namespace p2pflow
