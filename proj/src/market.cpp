#include "p2pflow/market.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace p2pflow {

namespace {

[[noreturn]] void fail(const std::string& stage, const std::string& msg) {
    throw Error(stage, msg);
}

bool order_before(const Order& a, const Order& b, bool ascending) {
    if (a.price != b.price) return ascending ? a.price < b.price : a.price > b.price;
    if (a.peer != b.peer) return a.peer < b.peer;
    return a.bus < b.bus;
}

} // namespace

std::vector<Order> parse_orders_csv(const std::string& text) {
    std::vector<Order> orders;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            if (line.find("side") != std::string::npos) continue;
        }
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) {
            size_t b = cell.find_first_not_of(" \t");
            size_t e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        if (cells.size() < 7)
            fail("market", "orders file line " + std::to_string(lineno) +
                               ": expected side,peer,bus,phase,qty_kw,price,slot");
        Order o;
        if (cells[0] == "ask")
            o.side = Side::ask;
        else if (cells[0] == "bid")
            o.side = Side::bid;
        else
            fail("market", "orders file line " + std::to_string(lineno) + ": side must be ask|bid");
        o.peer = cells[1];
        o.bus = std::stoi(cells[2]);
        o.phase = phase_from_letter(cells[3].at(0));
        o.qty_kw = std::stod(cells[4]);
        o.price = std::stod(cells[5]);
        o.slot = std::stoi(cells[6]);
        if (o.qty_kw <= 0.0)
            fail("market", "orders file line " + std::to_string(lineno) + ": quantity must be positive");
        if (o.price < 0.0)
            fail("market", "orders file line " + std::to_string(lineno) + ": price must be non-negative");
        orders.push_back(o);
    }
    return orders;
}

std::vector<Order> parse_orders_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("market", "cannot open orders file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_orders_csv(ss.str());
}

MatchResult match_orders(const std::vector<Order>& asks_in, const std::vector<Order>& bids_in) {
    for (const Order& o : asks_in)
        if (o.side != Side::ask) fail("market", "ask list contains a bid");
    for (const Order& o : bids_in)
        if (o.side != Side::bid) fail("market", "bid list contains an ask");
    if (!asks_in.empty() && !bids_in.empty()) {
        const int slot = asks_in.front().slot;
        for (const Order& o : asks_in)
            if (o.slot != slot) fail("market", "mixed slot indices in the order book");
        for (const Order& o : bids_in)
            if (o.slot != slot) fail("market", "mixed slot indices in the order book");
    }

    std::vector<Order> asks = asks_in;
    std::vector<Order> bids = bids_in;
    std::stable_sort(asks.begin(), asks.end(),
                     [](const Order& a, const Order& b) { return order_before(a, b, true); });
    std::stable_sort(bids.begin(), bids.end(),
                     [](const Order& a, const Order& b) { return order_before(a, b, false); });

    std::vector<double> ask_rem(asks.size()), bid_rem(bids.size());
    for (size_t i = 0; i < asks.size(); ++i) ask_rem[i] = asks[i].qty_kw;
    for (size_t i = 0; i < bids.size(); ++i) bid_rem[i] = bids[i].qty_kw;

    MatchResult result;
    for (size_t ai = 0; ai < asks.size(); ++ai) {
        for (size_t bi = 0; bi < bids.size() && ask_rem[ai] > 0.0; ++bi) {
            if (bid_rem[bi] <= 0.0) continue;
            if (bids[bi].price < asks[ai].price) break; // bids sorted descending
            // a peer cannot trade with itself at the same connection point
            if (asks[ai].bus == bids[bi].bus && asks[ai].phase == bids[bi].phase) continue;
            const double qty = std::min(ask_rem[ai], bid_rem[bi]);
            Trade t;
            t.producer_bus = asks[ai].bus;
            t.producer_phase = asks[ai].phase;
            t.consumer_bus = bids[bi].bus;
            t.consumer_phase = bids[bi].phase;
            t.quantity_kw = qty;
            t.price = 0.5 * (asks[ai].price + bids[bi].price);
            t.producer_peer = asks[ai].peer;
            t.consumer_peer = bids[bi].peer;
            result.block.trades.push_back(t);
            ask_rem[ai] -= qty;
            bid_rem[bi] -= qty;
        }
    }
    for (size_t i = 0; i < asks.size(); ++i) {
        if (ask_rem[i] > 0.0) {
            Order rest = asks[i];
            rest.qty_kw = ask_rem[i];
            result.unmatched.push_back(rest);
        }
    }
    for (size_t i = 0; i < bids.size(); ++i) {
        if (bid_rem[i] > 0.0) {
            Order rest = bids[i];
            rest.qty_kw = bid_rem[i];
            result.unmatched.push_back(rest);
        }
    }
    return result;
}

MatchResult match_orders(const std::vector<Order>& orders) {
    std::vector<Order> asks, bids;
    for (const Order& o : orders)
        (o.side == Side::ask ? asks : bids).push_back(o);
    return match_orders(asks, bids);
}

SessionReport run_session(const SessionConfig& config) {
    SessionReport report;
    report.slot = config.slot;

    // --- validate orders against the grid -----------------------------------
    for (size_t i = 0; i < config.orders.size(); ++i) {
        const Order& o = config.orders[i];
        if (!config.grid.has_bus(o.bus))
            fail("session/orders",
                 "order " + std::to_string(i) + " (peer " + o.peer + ") names unknown bus " +
                     std::to_string(o.bus));
        if (o.bus == config.grid.slack_id)
            fail("session/orders", "order " + std::to_string(i) + " (peer " + o.peer +
                                       ") names the slack bus; the substation does not trade");
        if (o.slot != config.slot)
            fail("session/orders", "order " + std::to_string(i) + " carries slot " +
                                       std::to_string(o.slot) + ", session expects " +
                                       std::to_string(config.slot));
    }

    // --- base case of the preceding slot ------------------------------------
    BaseCase base;
    try {
        GridModel g = scale_phase_loads(config.grid, config.scaling);
        g = per_unit(g, config.bases.s_kva, config.bases.v_kv);
        base = build_base_case(g, config.powerflow);
    } catch (const Error& e) {
        fail("session/basecase", e.what());
    }
    for (int ph = 0; ph < 3; ++ph) {
        report.base_min_vm[ph] = base.sol[ph].vm.minCoeff();
        report.base_loss_pu[ph] = base.branch[ph].total_loss;
    }
    for (const Bus& b : base.grid.buses) {
        if (b.id == base.grid.slack_id) continue;
        const int idx = base.grid.bus_index(b.id);
        const SequenceTriple seq = sequence_components(base.sol[0].voltage(idx),
                                                       base.sol[1].voltage(idx),
                                                       base.sol[2].voltage(idx));
        report.base_max_vuf_pct = std::max(report.base_max_vuf_pct, vuf(seq));
    }

    // --- matching ------------------------------------------------------------
    const MatchResult match = match_orders(config.orders);
    report.unmatched = match.unmatched;
    for (const Trade& t : match.block.trades) report.matched_kw += *t.quantity_kw;
    if (match.block.empty()) {
        report.evaluated = false;
        return report;
    }

    // --- DSO vetting -----------------------------------------------------------
    EvalOptions eopts;
    eopts.max_min_split = config.max_min_split;
    BlockEvaluation ev;
    try {
        ev = vet_block(base, match.block, config.limits, eopts);
    } catch (const Error& e) {
        fail("session/vetting", e.what());
    }
    report.evaluated = true;
    report.solver_status = ev.solver_status;
    if (ev.solver_status != SolveStatus::optimal)
        fail("session/vetting", std::string("solver returned ") + to_string(ev.solver_status) +
                                    ": " + ev.solver_message);
    report.binding = ev.binding;

    // --- loss allocation at the admitted quantities --------------------------
    TlcReport tlc;
    try {
        tlc = transaction_loss_coefficients(base, match.block, ev.quantity_kw);
    } catch (const Error& e) {
        fail("session/lossalloc", e.what());
    }
    report.incremental_loss_kw = tlc.incremental_loss_kw;

    for (size_t t = 0; t < match.block.size(); ++t) {
        SessionTrade st;
        st.trade = match.block.trades[t];
        st.admissible_kw = ev.quantity_kw[t];
        st.verdict = ev.verdicts[t];
        st.tlc_producer_kw = tlc.trades[t].producer_kw;
        st.tlc_consumer_kw = tlc.trades[t].consumer_kw;
        st.fee = config.loss_price * tlc.trades[t].total();
        st.binding = ev.binding_per_trade[t];
        report.trades.push_back(st);
        report.admitted_kw += st.admissible_kw;
    }
    return report;
}

} // namespace p2pflow
