#pragma once

#include <span>
#include <vector>

#include "fundopt/utility.hpp"

namespace fundopt::discrete {

struct MarketState {
    double prob = 0.0;          // physical probability
    double gross_return = 0.0;  // price relative over the period
};

/// One-period market with a single risky asset at initial price one.
/// No-arbitrage requires at least one return above and one below one.
class FiniteMarket {
public:
    explicit FiniteMarket(std::vector<MarketState> states);

    std::span<const MarketState> states() const { return states_; }
    std::size_t size() const { return states_.size(); }

    /// Position bounds from terminal nonnegativity x + h (r_i - 1) >= 0.
    double h_min(double x) const;
    double h_max(double x) const;

    /// Vertices of the closure of the equivalent-martingale-measure polytope
    /// {q in simplex : sum q_i r_i = 1}.
    std::vector<std::vector<double>> emm_vertices() const;

    bool is_binomial() const { return states_.size() == 2; }
    /// The unique martingale measure of a two-state market.
    std::vector<double> binomial_emm() const;

private:
    std::vector<MarketState> states_;
};

struct PrimalResult {
    double value = 0.0;
    double h_lo = 0.0;  // argmax interval; h_lo == h_hi when the maximizer is unique
    double h_hi = 0.0;
};

/// Exact maximization of h -> sum p_i f(x + h (r_i - 1)) over the admissible
/// position range, f being the composed utility or its envelope. The
/// objective is concave between wealth-kink crossings, so breakpoint
/// enumeration plus golden section per smooth piece is exact.
PrimalResult primal_value_exact(const FiniteMarket& mkt, const PiecewiseUtility& pu,
                                double x, bool use_envelope);

struct DualResult {
    double value = 0.0;
    std::vector<double> q;
    bool boundary = false;  // infimum approached with some q_i at the edge
};

/// Minimizes q -> sum p_i conj(y q_i / p_i) over the EMM polytope closure.
DualResult dual_value_exact(const FiniteMarket& mkt, const DualUtility& du, double y);

/// Marginal value w'(x) and dual minimizer, from w(x) = inf_y (v(y) + x y).
struct Marginal {
    double y = 0.0;       // w'(x)
    double w = 0.0;       // w(x)
    DualResult at_y;      // dual optimizer at y
};
Marginal marginal_value(const FiniteMarket& mkt, const DualUtility& du, double x);

struct Atom {
    double value = 0.0;
    double mass = 0.0;
};

struct AtomReport {
    std::vector<Atom> delta;          // atoms of the dual optimizer y dQ/dP
    std::vector<double> gamma;        // envelope slope set
    std::vector<double> intersection;
    bool condition_holds = false;     // empty intersection certifies uniqueness
};

AtomReport atom_report(const FiniteMarket& mkt, const DualUtility& du, double y);

struct BidualityReport {
    double u = 0.0;
    double w = 0.0;
    double gap = 0.0;
    PrimalResult primal_original;
    PrimalResult primal_envelope;
};

BidualityReport biduality_gap(const FiniteMarket& mkt, const PiecewiseUtility& pu, double x);

enum class SelectionStatus { unique, non_unique, infeasible };

struct SelectionResult {
    SelectionStatus status = SelectionStatus::unique;
    double y = 0.0;                                   // w'(x) used
    std::vector<double> payoff;                       // a feasible selection
    std::vector<DualUtility::Interval> per_state;     // feasible ranges per state
};

/// Per state the payoff must lie in -d(conj)(y z_i); the budget
/// sum q_i w_i = x selects within those intervals.
SelectionResult subdifferential_selection(const FiniteMarket& mkt, const DualUtility& du,
                                          double x);

/// Quantile discretization of the lognormal terminal return of a
/// Black-Scholes market (equal-probability states at conditional medians).
FiniteMarket lognormal_discretization(double mu, double sigma, double T, std::size_t n_states);

}  // namespace fundopt::discrete
