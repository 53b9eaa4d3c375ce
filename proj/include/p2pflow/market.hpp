#pragma once

#include <optional>
#include <string>
#include <vector>

#include "p2pflow/evaluator.hpp"
#include "p2pflow/lossalloc.hpp"

namespace p2pflow {

enum class Side { ask, bid };

struct Order {
    Side side = Side::ask;
    std::string peer;
    int bus = 0;
    Phase phase = Phase::a;
    double qty_kw = 0.0;
    double price = 0.0; // currency/kWh, limit
    int slot = 0;
};

std::vector<Order> parse_orders_csv(const std::string& text);
std::vector<Order> parse_orders_file(const std::string& path);

struct MatchResult {
    TradeBlock block;              // matched trades, clearing price in Trade::price
    std::vector<Order> unmatched;  // residual quantities, original order fields
};

/// Price-priority double auction: asks ascending, bids descending, greedy
/// matching while prices cross; partial fills split orders; per-trade
/// clearing price is the midpoint of the matched pair.
MatchResult match_orders(const std::vector<Order>& asks, const std::vector<Order>& bids);
MatchResult match_orders(const std::vector<Order>& orders);

struct SessionConfig {
    GridModel grid;          // physical units
    PhaseScaling scaling;    // base-case state of the preceding slot
    Bases bases{100.0, 0.4};
    Limits limits;
    std::vector<Order> orders;
    int slot = 0;
    double loss_price = 0.0; // currency per kWh of allocated incremental loss
    bool max_min_split = false;
    PowerFlowOptions powerflow;
};

struct SessionTrade {
    Trade trade;             // negotiated quantity + clearing price
    double admissible_kw = 0.0;
    Verdict verdict = Verdict::rejected;
    double tlc_producer_kw = 0.0;
    double tlc_consumer_kw = 0.0;
    double fee = 0.0;        // loss_price * (tlc_producer + tlc_consumer)
    std::string binding;     // dominant binding tag, "-" if none
};

struct SessionReport {
    int slot = 0;
    std::vector<SessionTrade> trades;
    std::vector<Order> unmatched;
    std::vector<std::string> binding; // block-level active constraints
    double matched_kw = 0.0;
    double admitted_kw = 0.0;
    double incremental_loss_kw = 0.0;
    bool evaluated = false;           // false when the book produced no block
    SolveStatus solver_status = SolveStatus::optimal;
    std::array<double, 3> base_min_vm{};  // per phase
    std::array<double, 3> base_loss_pu{}; // per phase
    double base_max_vuf_pct = 0.0;
};

/// Full market session: base case of the preceding slot, sensitivities,
/// matching, block vetting by the network model, loss allocation, report.
SessionReport run_session(const SessionConfig& config);

} // namespace p2pflow
