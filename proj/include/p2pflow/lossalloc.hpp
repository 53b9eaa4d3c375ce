#pragma once

#include <vector>

#include "p2pflow/evaluator.hpp"

namespace p2pflow {

struct TlcEntry {
    double producer_kw = 0.0;
    double consumer_kw = 0.0;
    double total() const { return producer_kw + consumer_kw; }
};

struct TlcLineDetail {
    int line_index = 0;
    Phase phase = Phase::a;
    double loss_kw = 0.0; // incremental R |dI|^2 on this line
};

struct TlcReport {
    std::vector<TlcEntry> trades;
    double total_kw = 0.0;            // sum of all trade shares
    double incremental_loss_kw = 0.0; // total linearized incremental loss
    std::vector<TlcLineDetail> lines; // populated when verbose
};

/// Gradient of one line's incremental loss R|dI|^2 with respect to nodal
/// active-power injections of the line's phase, evaluated at injection dp
/// (per-unit, slack excluded, ordered as the sensitivity index).
Eigen::VectorXd line_loss_gradient(const BaseCase& base, int line_index, Phase phase,
                                   const Eigen::VectorXd& dp);

/// Per-transaction loss shares at the block's accepted quantities: each
/// trade's two legs accumulate gradient * injection over every line and
/// phase. Fees follow by multiplying with a loss price outside this module.
TlcReport transaction_loss_coefficients(const BaseCase& base, const TradeBlock& block,
                                        const std::vector<double>& quantity_kw,
                                        bool verbose = false, Exec exec = Exec::openmp);

} // namespace p2pflow
