#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "p2pflow/common.hpp"

namespace p2pflow {

/// ||G x + h||_2 <= d'x + e
struct SocConstraint {
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    Eigen::VectorXd d; // may be empty for a constant right side
    double e = 0.0;
};

/// maximize c'x  s.t.  A_eq x = b_eq, A_in x <= b_in, SOCs, lo <= x <= hi.
struct ConicProgram {
    int n = 0;
    Eigen::VectorXd c;
    Eigen::MatrixXd a_eq;
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd a_in;
    Eigen::VectorXd b_in;
    std::vector<SocConstraint> socs;
    Eigen::VectorXd lo; // may be empty; -inf entries allowed
    Eigen::VectorXd hi; // may be empty; +inf entries allowed

    void validate() const; // throws Error("socp", ...) on dimension mismatch
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iterations, numerical_error };

const char* to_string(SolveStatus s);

struct ConicSolution {
    SolveStatus status = SolveStatus::numerical_error;
    Eigen::VectorXd x;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double duality_gap = 0.0;
    double certificate_residual = 0.0; // infeasibility certificate quality
    Eigen::VectorXd ineq_slack;        // b_in - A_in x
    Eigen::VectorXd ineq_dual;
    std::vector<double> soc_slack;     // (d'x+e) - ||Gx+h|| per cone
    std::vector<double> soc_dual;      // dual weight (leading component) per cone
    int iterations = 0;
    std::string message;
};

struct SolveOptions {
    double tol = 1e-8;
    int max_iter = 200;
    bool verbose = false;
};

/// Embedded primal-dual interior-point solver (homogeneous self-dual
/// embedding, Nesterov-Todd scaling on second-order cones, dense KKT).
ConicSolution solve_conic(const ConicProgram& prog, const SolveOptions& opts = {});

/// Replaceable solver seam; defaults to the embedded solver.
using ConicSolver = std::function<ConicSolution(const ConicProgram&, const SolveOptions&)>;

/// Plain-text dump of the program in standard form, for cross-checking
/// against external tools. Format documented in docs/formats.md.
std::string dump_program(const ConicProgram& prog);

} // namespace p2pflow
