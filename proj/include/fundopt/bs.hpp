#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fundopt/mc.hpp"
#include "fundopt/utility.hpp"

namespace fundopt::bs {

/// Black-Scholes market in discounted coordinates:
/// S_t = exp(sigma W_t + (mu - sigma^2/2) t).
struct Market {
    double mu = 0.1;
    double sigma = 0.2;
    double T = 1.0;

    double theta() const { return mu / sigma; }
};

/// Power utility with a call incentive, the analytically solvable family.
struct CallParams {
    double p = 0.5;
    double lambda = 0.25;
    double k = 3.0;

    double x_star() const { return k / (1.0 - p); }
    double y_star() const;
};

/// Closed-form dual/primal solution for theta != 0. A negative market price
/// of risk is handled by reflecting the Brownian motion.
class Solver {
public:
    Solver(Market m, CallParams cp);  // throws DegenerateMarket when theta == 0

    const Market& market() const { return m_; }
    const CallParams& params() const { return cp_; }
    bool reflected() const { return reflected_; }

    double dual_value(double y) const;         // v(y)
    double dual_deriv(double y) const;         // v'(y)
    double dual_second_deriv(double y) const;  // v''(y)

    struct Primal {
        double w;  // concavified value w(x)
        double y;  // marginal w'(x)
    };
    /// Solves -v'(y) = x by bisection (v strictly convex => unique root).
    Primal primal_value(double x) const;

    /// Optimal terminal wealth as a deterministic function of W_T.
    /// Zero below the ruin threshold, the power branch at or above it;
    /// continuous onto the envelope edge: payoff(threshold) = x_star.
    class Payoff {
    public:
        double operator()(double w_T) const;

    private:
        friend class Solver;
        double y_x, threshold, lam_p, inv_1mp, theta, half_var, k;
        bool reflected;
    };
    Payoff payoff(double x) const;

    /// Ruin threshold in W_T coordinates for theta > 0.
    double threshold(double x) const;

    /// Money invested in stock at time t given W_t (explicit three-term
    /// formula; equals f_z(t, W_t + theta t) / sigma for the heat-equation
    /// representation of the terminal payoff).
    double hedge(double x, double t, double w_t) const;

    /// Hedge functor with the marginal value w'(x) precomputed; use inside
    /// simulation loops.
    class Hedger {
    public:
        double operator()(double t, double w_t) const;

    private:
        friend class Solver;
        const Solver* solver;
        double y_x;
    };
    Hedger hedger(double x) const;

    double ruin_probability(double x) const;  // P[terminal wealth = 0]

    /// Relative risk aversion of the dual value, -y v''(y) / v'(y).
    double rra_dual(double y) const;

private:
    double m_of(double y) const;  // (log y* - log y) / (theta sqrt(T))

    Market m_;
    CallParams cp_;
    double theta_ = 0.0;  // |mu| / sigma
    bool reflected_ = false;
    double q_ = 0.0;      // p / (p - 1)
    double growth_ = 0.0; // exp(p / (1-p)^2 * theta^2 T / 2)
    double y_star_ = 0.0;
    double s_ = 0.0;      // theta sqrt(T)
};

/// Incentive family with constant y_star: (k, lambda) = (alpha kappa,
/// alpha^{(1-p)/p} l). Throws SlopeViolation when lambda(alpha) > 1.
std::pair<double, double> scale_family(double p, double kappa, double l, double alpha);

struct ScalingResult {
    std::optional<double> alpha;
    double c_star = 0.0;
    double scan_lo = 0.0;
    double scan_hi = 0.0;
    std::string reason;  // set when alpha is absent
};

/// Optimal scale alpha = x / c_star where the elasticity c w'(c) / w(c) of
/// the unit-scale value function equals one. Returns no alpha when the
/// elasticity stays below one on the scanned range (utility then increases
/// with alpha without bound).
ScalingResult optimal_scaling(const Market& m, double p, double kappa, double l, double x);

struct DriftlessResult {
    mc::McEstimate hit_prob;       // P[terminal = x_star]
    mc::McEstimate mean_terminal;  // E[X at the exit time]
    mc::McEstimate utility_u;      // E[composed utility of X_T]
    mc::McEstimate utility_env;    // E[envelope utility of X_T]
    double tail_resolved_fraction = 0.0;  // paths alive at s_max
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
};

/// Zero-drift construction: the stopped time-changed Brownian strategy
/// H_t = 1/(sigma S_t sqrt(T-t)) gives X = x + W~ on the log-clock
/// s = log(T/(T-t)), absorbed at 0 and x_star. Uniform steps in s with a
/// Brownian-bridge crossing check per step; paths still alive at s_max are
/// resolved exactly (absorption at x_star with probability X/x_star, the
/// bounded-martingale exit law).
DriftlessResult driftless_simulate(double x, double x_star, double sigma, double T,
                                   std::size_t n_paths, std::size_t n_steps,
                                   std::uint64_t seed, const PiecewiseUtility& pu,
                                   double s_max = 40.0, int threads = 0);

}  // namespace fundopt::bs
