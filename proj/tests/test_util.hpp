#pragma once

#include <functional>
#include <random>
#include <string>

#include "p2pflow/netmodel.hpp"
#include "p2pflow/powerflow.hpp"
#include "p2pflow/socp.hpp"

namespace testutil {

using namespace p2pflow;

inline std::string data_path(const std::string& name) {
    return std::string(P2PFLOW_DATA_DIR) + "/" + name;
}

inline std::string golden_path(const std::string& name) {
    return std::string(P2PFLOW_GOLDEN_DIR) + "/" + name;
}

/// Bundled feeder in per-unit at the default bases with the standard
/// base-case phase scalings a/b/c = 1.0/1.2/0.8.
inline GridModel bundled_grid_pu(std::array<double, 3> scaling = {1.0, 1.2, 0.8}) {
    GridModel g = parse_grid_file(data_path("ieee33.json"));
    g = scale_phase_loads(g, PhaseScaling{scaling});
    return per_unit(g, 100.0, 0.4);
}

/// Two-bus grid: slack 1, load bus 2 behind z = j0.1 pu, load 0.1 pu.
inline GridModel two_bus_pu(double r = 0.0, double x = 0.1, double p = 0.1, double q = 0.0) {
    GridModel g;
    g.slack_id = 1;
    Bus b1;
    b1.id = 1;
    Bus b2;
    b2.id = 2;
    for (int ph = 0; ph < 3; ++ph) b2.load[ph] = {p, q};
    g.buses = {b1, b2};
    g.lines = {Line{1, 2, r, x, 0.0}};
    g.bases = Bases{100.0, 0.4};
    return g;
}

/// Random radial per-unit grid with n buses, deterministic in the seed.
inline GridModel random_radial_pu(int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> rdist(0.01, 0.08);
    std::uniform_real_distribution<double> xdist(0.005, 0.06);
    std::uniform_real_distribution<double> pdist(0.0, 0.02);
    std::uniform_real_distribution<double> qdist(0.0, 0.01);
    GridModel g;
    g.slack_id = 1;
    for (int i = 1; i <= n; ++i) {
        Bus b;
        b.id = i;
        if (i > 1) {
            const double p = pdist(rng), q = qdist(rng);
            for (int ph = 0; ph < 3; ++ph) b.load[ph] = {p, q};
        }
        g.buses.push_back(b);
    }
    for (int i = 2; i <= n; ++i) {
        std::uniform_int_distribution<int> parent(1, i - 1);
        g.lines.push_back(Line{parent(rng), i, rdist(rng), xdist(rng), 0.0});
    }
    g.bases = Bases{100.0, 0.4};
    return g;
}

/// Central finite differences of the power-flow injection equations with
/// respect to (|V|, delta) at a solved state; the independent oracle for the
/// analytic Jacobian blocks.
struct FdJacobian {
    Eigen::MatrixXd j_pv, j_pd, j_qv, j_qd;
};

inline FdJacobian fd_jacobian(const GridModel& grid, const PhaseSolution& sol, double eps = 1e-6) {
    const Eigen::MatrixXcd ybus = admittance_matrix(grid);
    const int n = static_cast<int>(grid.buses.size());
    const int slack = grid.bus_index(grid.slack_id);
    std::vector<int> pq;
    for (int i = 0; i < n; ++i)
        if (i != slack) pq.push_back(i);
    const int m = static_cast<int>(pq.size());

    const auto inject = [&](const Eigen::VectorXd& vm, const Eigen::VectorXd& va, int bus,
                            bool reactive) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const Complex y = ybus(bus, j);
            if (y == Complex(0.0, 0.0)) continue;
            const double ang = va[bus] - va[j] - std::arg(y);
            acc += vm[bus] * vm[j] * std::abs(y) * (reactive ? std::sin(ang) : std::cos(ang));
        }
        return acc;
    };

    FdJacobian fd;
    fd.j_pv.resize(m, m);
    fd.j_pd.resize(m, m);
    fd.j_qv.resize(m, m);
    fd.j_qd.resize(m, m);
    for (int col = 0; col < m; ++col) {
        for (int row = 0; row < m; ++row) {
            Eigen::VectorXd vm_hi = sol.vm, vm_lo = sol.vm;
            vm_hi[pq[col]] += eps;
            vm_lo[pq[col]] -= eps;
            fd.j_pv(row, col) = (inject(vm_hi, sol.va, pq[row], false) -
                                 inject(vm_lo, sol.va, pq[row], false)) /
                                (2 * eps);
            fd.j_qv(row, col) = (inject(vm_hi, sol.va, pq[row], true) -
                                 inject(vm_lo, sol.va, pq[row], true)) /
                                (2 * eps);
            Eigen::VectorXd va_hi = sol.va, va_lo = sol.va;
            va_hi[pq[col]] += eps;
            va_lo[pq[col]] -= eps;
            fd.j_pd(row, col) = (inject(sol.vm, va_hi, pq[row], false) -
                                 inject(sol.vm, va_lo, pq[row], false)) /
                                (2 * eps);
            fd.j_qd(row, col) = (inject(sol.vm, va_hi, pq[row], true) -
                                 inject(sol.vm, va_lo, pq[row], true)) /
                                (2 * eps);
        }
    }
    return fd;
}

/// Brute-force LP oracle: maximize c'x over box + halfspaces by enumerating
/// candidate vertices (all n-subsets of active constraints).
inline double vertex_enumeration_max(const Eigen::VectorXd& c, const Eigen::MatrixXd& a,
                                     const Eigen::VectorXd& b, const Eigen::VectorXd& lo,
                                     const Eigen::VectorXd& hi) {
    const int n = static_cast<int>(c.size());
    // Stack all constraints as rows of (normal | offset) with normal'x <= offset.
    std::vector<Eigen::VectorXd> normals;
    std::vector<double> offsets;
    for (int i = 0; i < a.rows(); ++i) {
        normals.push_back(a.row(i).transpose());
        offsets.push_back(b[i]);
    }
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e[i] = 1.0;
        normals.push_back(e);
        offsets.push_back(hi[i]);
        normals.push_back(-e);
        offsets.push_back(-lo[i]);
    }
    const int total = static_cast<int>(normals.size());
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> pick(n);
    const auto feasible = [&](const Eigen::VectorXd& x) {
        for (int i = 0; i < total; ++i)
            if (normals[i].dot(x) > offsets[i] + 1e-9) return false;
        return true;
    };
    // Enumerate n-subsets via simple recursion.
    const std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == n) {
            Eigen::MatrixXd m(n, n);
            Eigen::VectorXd rhs(n);
            for (int i = 0; i < n; ++i) {
                m.row(i) = normals[pick[i]].transpose();
                rhs[i] = offsets[pick[i]];
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
            if (!lu.isInvertible()) return;
            const Eigen::VectorXd x = lu.solve(rhs);
            if (feasible(x)) best = std::max(best, c.dot(x));
            return;
        }
        for (int i = start; i <= total - (n - depth); ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

} // namespace testutil
