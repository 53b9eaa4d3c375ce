#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "p2pflow/common.hpp"
#include "p2pflow/netmodel.hpp"
#include "p2pflow/powerflow.hpp"
#include "p2pflow/sensitivity.hpp"
#include "p2pflow/socp.hpp"

namespace p2pflow {

/// Network-constraint limits for block evaluation.
struct Limits {
    std::optional<double> alpha;  // voltage-unbalance bound as a fraction; nullopt disables
    double dv_max = 0.05;         // symmetric voltage-magnitude deviation bound, pu
    double di_headroom = 0.30;    // fraction of base line current allowed as increment
    double i_floor = 0.01;        // absolute headroom floor, pu

    void validate() const;
};

struct Trade {
    int producer_bus = 0;
    Phase producer_phase = Phase::a;
    int consumer_bus = 0;
    Phase consumer_phase = Phase::a;
    std::optional<double> quantity_kw; // negotiated; required in vetting mode
    double price = 0.0;                // currency/kWh, carried through for settlement
    std::string producer_peer;
    std::string consumer_peer;
};

struct TradeBlock {
    std::vector<Trade> trades;

    bool empty() const { return trades.empty(); }
    size_t size() const { return trades.size(); }
};

TradeBlock parse_trades_csv(const std::string& text);
TradeBlock parse_trades_file(const std::string& path);

/// One market slot's converged state: solutions, sensitivities and branch
/// currents for all three phases over a shared per-unit grid.
struct BaseCase {
    GridModel grid; // per-unit
    std::array<PhaseSolution, 3> sol;
    std::array<SensitivityModel, 3> sens;
    std::array<BranchState, 3> branch;

    double s_base_kva() const { return grid.bases->s_kva; }
    const SensitivityModel& sensitivity(Phase p) const { return sens[static_cast<int>(p)]; }
};

BaseCase build_base_case(const GridModel& grid_pu, const PowerFlowOptions& opts = {},
                         Exec exec = Exec::openmp);

enum class EvalMode { capacity, vetting };
enum class Verdict { accepted, curtailed, rejected };

const char* to_string(Verdict v);

/// Conic program plus the maps connecting rows/cones back to the network.
struct BlockProgram {
    ConicProgram program;           // variables: one q_t (pu) per trade
    std::vector<std::string> ineq_tags; // per linear row
    std::vector<std::string> soc_tags;  // per cone
    // nodal injection map: dP^phase = injection[phase] * q  (pu)
    std::array<Eigen::MatrixXd, 3> injection;
    std::vector<int> node_ids; // row order of injection (slack excluded)
};

BlockProgram build_block_program(const BaseCase& base, const TradeBlock& block,
                                 const Limits& limits, EvalMode mode);

struct BlockEvaluation {
    SolveStatus solver_status = SolveStatus::numerical_error;
    std::string solver_message;
    std::vector<double> quantity_kw;       // admissible quantity per trade
    double total_kw = 0.0;                 // objective: total traded power
    std::vector<Verdict> verdicts;         // vetting mode only
    std::vector<std::string> binding;      // active constraint tags, block level
    std::vector<std::string> binding_per_trade; // dominant active tag per trade ("-" if none)
    int solver_iterations = 0;
};

struct EvalOptions {
    SolveOptions socp;
    ConicSolver solver;            // defaults to the embedded solver
    double binding_tol = 1e-6;
    bool max_min_split = false;    // lexicographic second pass at fixed total
};

BlockEvaluation evaluate_capacity(const BaseCase& base, const TradeBlock& block,
                                  const Limits& limits, const EvalOptions& opts = {});

BlockEvaluation vet_block(const BaseCase& base, const TradeBlock& block, const Limits& limits,
                          const EvalOptions& opts = {});

struct FrontierPoint {
    double others_total_kw = 0.0;
    double target_max_kw = 0.0;
};

/// Fixes all trades but `target_index` at quantities proportional to their
/// negotiated values (equal weights if absent) summing to each grid value,
/// then maximizes the target alone. Infeasible fixings yield zero capacity.
std::vector<FrontierPoint> frontier_sweep(const BaseCase& base, const TradeBlock& block,
                                          const Limits& limits, int target_index,
                                          const std::vector<double>& others_totals_kw,
                                          const EvalOptions& opts = {},
                                          Exec exec = Exec::openmp);

/// Grid with the block's accepted quantities applied as injections
/// (producer load decreases, consumer load increases). For physical re-checks.
GridModel grid_with_injections(const GridModel& grid_pu, const TradeBlock& block,
                               const std::vector<double>& quantity_kw);

} // namespace p2pflow
