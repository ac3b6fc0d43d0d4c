#include "fundopt/bs.hpp"

#include <algorithm>
#include <cmath>

#include "fundopt/math.hpp"

namespace fundopt::bs {

double CallParams::y_star() const {
    return std::pow(lambda, p) * std::pow(p * k / (1.0 - p), p - 1.0);
}

Solver::Solver(Market m, CallParams cp) : m_(m), cp_(cp) {
    if (!(m_.sigma > 0.0) || !(m_.T > 0.0)) {
        throw DomainError("bs::Solver: need sigma > 0 and T > 0");
    }
    if (!(cp_.p > 0.0 && cp_.p < 1.0) || !(cp_.lambda > 0.0 && cp_.lambda <= 1.0 + 1e-12) ||
        !(cp_.k > 0.0)) {
        throw DomainError("bs::Solver: invalid (p, lambda, k)");
    }
    double theta = m_.theta();
    if (theta == 0.0) {
        throw DegenerateMarket("bs::Solver: zero market price of risk; use the driftless path");
    }
    reflected_ = theta < 0.0;
    theta_ = std::abs(theta);
    q_ = cp_.p / (cp_.p - 1.0);
    growth_ = std::exp(cp_.p / ((1.0 - cp_.p) * (1.0 - cp_.p)) * theta_ * theta_ * m_.T * 0.5);
    y_star_ = cp_.y_star();
    s_ = theta_ * std::sqrt(m_.T);
}

double Solver::m_of(double y) const {
    return (std::log(y_star_) - std::log(y)) / s_;
}

double Solver::dual_value(double y) const {
    if (!(y > 0.0)) throw DomainError("dual_value: y must be positive");
    double p = cp_.p;
    double m = m_of(y);
    double d_plus = m + (0.5 + p / (1.0 - p)) * s_;
    double d_minus = m - 0.5 * s_;
    double a = (1.0 - p) / p * std::pow(y / cp_.lambda, q_) * growth_;
    return a * norm_cdf(d_plus) - cp_.k * y * norm_cdf(d_minus);
}

double Solver::dual_deriv(double y) const {
    if (!(y > 0.0)) throw DomainError("dual_deriv: y must be positive");
    double p = cp_.p;
    double m = m_of(y);
    double d_plus = m + (0.5 + p / (1.0 - p)) * s_;
    double d_minus = m - 0.5 * s_;
    double a = (1.0 - p) / p * std::pow(y / cp_.lambda, q_) * growth_;
    // The density terms cancel through a phi(d+) = k y phi(d-).
    return q_ * a / y * norm_cdf(d_plus) - cp_.k * norm_cdf(d_minus);
}

double Solver::dual_second_deriv(double y) const {
    if (!(y > 0.0)) throw DomainError("dual_second_deriv: y must be positive");
    double p = cp_.p;
    double m = m_of(y);
    double d_plus = m + (0.5 + p / (1.0 - p)) * s_;
    double d_minus = m - 0.5 * s_;
    double a = (1.0 - p) / p * std::pow(y / cp_.lambda, q_) * growth_;
    return q_ * (q_ - 1.0) * a / (y * y) * norm_cdf(d_plus) -
           q_ * a / (y * y) * norm_pdf(d_plus) / s_ +
           cp_.k * norm_pdf(d_minus) / (y * s_);
}

Solver::Primal Solver::primal_value(double x) const {
    if (!(x > 0.0)) throw DomainError("primal_value: x must be positive");
    auto excess = [&](double y) { return -dual_deriv(y) - x; };  // decreasing in y
    double y_hi = std::max(1.0, y_star_);
    int guard = 0;
    while (excess(y_hi) > 0.0) {
        y_hi *= 2.0;
        if (++guard > 400) throw ConvergenceError("primal_value: no upper bracket");
    }
    double y_lo = std::min(1e-10, y_hi * 0.5);
    guard = 0;
    while (excess(y_lo) < 0.0) {
        y_lo *= 0.5;
        if (++guard > 400) throw ConvergenceError("primal_value: no lower bracket");
    }
    BisectOptions opt;
    opt.x_tol = 1e-14;
    opt.max_iter = 200;
    double y = bisect(excess, y_lo, y_hi, opt);
    return {dual_value(y) + x * y, y};
}

double Solver::threshold(double x) const {
    double y_x = primal_value(x).y;
    return (std::log(y_x) - std::log(y_star_)) / theta_ - theta_ * m_.T * 0.5;
}

Solver::Payoff Solver::payoff(double x) const {
    Payoff f;
    f.y_x = primal_value(x).y;
    f.threshold = (std::log(f.y_x) - std::log(y_star_)) / theta_ - theta_ * m_.T * 0.5;
    f.lam_p = std::pow(cp_.lambda, cp_.p);
    f.inv_1mp = 1.0 / (1.0 - cp_.p);
    f.theta = theta_;
    f.half_var = theta_ * theta_ * m_.T * 0.5;
    f.k = cp_.k;
    f.reflected = reflected_;
    return f;
}

double Solver::Payoff::operator()(double w_T) const {
    double w = reflected ? -w_T : w_T;
    if (w < threshold) return 0.0;  // the threshold event itself joins the upper branch
    double z = lam_p * std::exp(theta * w + half_var) / y_x;
    return std::pow(z, inv_1mp) + k;
}

double Solver::hedge(double x, double t, double w_t) const {
    return hedger(x)(t, w_t);
}

Solver::Hedger Solver::hedger(double x) const {
    Hedger h;
    h.solver = this;
    h.y_x = primal_value(x).y;
    return h;
}

double Solver::Hedger::operator()(double t, double w_t) const {
    const Solver& s = *solver;
    if (t >= s.m_.T) throw TimeOutOfRange("hedge: t must be below the horizon");
    if (t < 0.0) throw TimeOutOfRange("hedge: negative time");
    double w = s.reflected_ ? -w_t : w_t;
    double p = s.cp_.p;
    double tau = s.m_.T - t;
    double sq = std::sqrt(tau);
    double z = w + s.theta_ * t;  // Brownian motion under the pricing measure
    double arg0 = -(std::log(y_x) - std::log(s.y_star_)) / (s.theta_ * sq) -
                  s.theta_ * s.m_.T / (2.0 * sq) + z / sq;
    double arg1 = arg0 + s.theta_ * sq / (1.0 - p);
    double pre = std::pow(std::pow(s.cp_.lambda, p) / y_x, 1.0 / (1.0 - p)) *
                 std::exp(s.theta_ * z / (1.0 - p) +
                          s.theta_ * s.theta_ / (2.0 * (1.0 - p)) * (-s.m_.T + tau / (1.0 - p)));
    double h = s.theta_ / ((1.0 - p) * s.m_.sigma) * pre * norm_cdf(arg1) +
               pre * norm_pdf(arg1) / (s.m_.sigma * sq) +
               s.cp_.k * norm_pdf(arg0) / (s.m_.sigma * sq);
    return s.reflected_ ? -h : h;
}

double Solver::ruin_probability(double x) const {
    return norm_cdf(threshold(x) / std::sqrt(m_.T));
}

double Solver::rra_dual(double y) const {
    return -y * dual_second_deriv(y) / dual_deriv(y);
}

std::pair<double, double> scale_family(double p, double kappa, double l, double alpha) {
    if (!(alpha > 0.0) || !(kappa > 0.0) || !(l > 0.0)) {
        throw DomainError("scale_family: alpha, kappa, l must be positive");
    }
    double k = alpha * kappa;
    double lambda = std::pow(alpha, (1.0 - p) / p) * l;
    if (lambda > 1.0 + 1e-12) {
        throw SlopeViolation("scale_family: lambda(alpha) exceeds 1");
    }
    return {k, lambda};
}

ScalingResult optimal_scaling(const Market& m, double p, double kappa, double l, double x) {
    if (!(x > 0.0)) throw DomainError("optimal_scaling: x must be positive");
    if (!(l > 0.0 && l <= 1.0 + 1e-12)) {
        throw SlopeViolation("optimal_scaling: lambda(1) = l must lie in (0, 1]");
    }
    Solver base(m, {p, l, kappa});  // unit scale: (k(1), lambda(1)) = (kappa, l)
    auto elasticity_excess = [&](double c) {
        auto pr = base.primal_value(c);
        return c * pr.y / pr.w - 1.0;  // E(w)(c) - 1
    };
    ScalingResult res;
    res.scan_lo = 1e-3 * std::min(1.0, x);
    res.scan_hi = 1e3 * std::max(1.0, x);
    std::vector<double> cs = logspace(res.scan_lo, res.scan_hi, 61);
    double prev_c = cs.front();
    double prev_f = elasticity_excess(prev_c);
    double max_f = prev_f;
    for (std::size_t i = 1; i < cs.size(); ++i) {
        double f = elasticity_excess(cs[i]);
        max_f = std::max(max_f, f);
        if ((prev_f > 0.0) != (f > 0.0)) {
            BisectOptions opt;
            opt.x_tol = 1e-12;
            double c_star = bisect(elasticity_excess, prev_c, cs[i], opt);
            res.c_star = c_star;
            res.alpha = x / c_star;
            return res;
        }
        prev_c = cs[i];
        prev_f = f;
    }
    if (max_f < 0.0) {
        res.reason = "elasticity of the unit-scale value function stays below 1 on the "
                     "scanned range; expected utility increases with alpha";
    } else {
        res.reason = "no sign change of the elasticity condition on the scanned range";
    }
    return res;
}

DriftlessResult driftless_simulate(double x, double x_star, double sigma, double T,
                                   std::size_t n_paths, std::size_t n_steps,
                                   std::uint64_t seed, const PiecewiseUtility& pu,
                                   double s_max, int threads) {
    if (!(x > 0.0 && x < x_star)) {
        throw InvalidRange("driftless_simulate: x must lie in (0, x_star)");
    }
    if (!(sigma > 0.0) || !(T > 0.0) || n_steps == 0 || n_paths == 0) {
        throw InvalidRange("driftless_simulate: invalid simulation parameters");
    }
    if (!std::isfinite(pu.value(0.0))) {
        throw DomainError("driftless_simulate: composed utility must be finite at zero");
    }
    const double ds = s_max / static_cast<double>(n_steps);
    const double sq_ds = std::sqrt(ds);
    const double u_star = pu.value(x_star);
    const double env_star = pu.envelope(x_star);

    std::vector<double> hit(n_paths), terminal(n_paths), util_u(n_paths), util_env(n_paths);
    std::vector<double> tail_flag(n_paths);
    mc::RngPlan plan{seed};
    mc::parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            mc::PathRng rng(plan, i);
            double v = x;
            int outcome = -1;  // 0: ruined, 1: hit x_star
            for (std::size_t j = 0; j < n_steps; ++j) {
                double next = v + sq_ds * rng.next_normal();
                if (next <= 0.0) {
                    outcome = 0;
                    break;
                }
                if (next >= x_star) {
                    outcome = 1;
                    break;
                }
                // Brownian-bridge crossing probabilities within the step.
                double p_low = std::exp(-2.0 * v * next / ds);
                double p_high = std::exp(-2.0 * (x_star - v) * (x_star - next) / ds);
                double u = rng.next_uniform();
                if (u < p_low) {
                    outcome = 0;
                    break;
                }
                if (u < p_low + p_high) {
                    outcome = 1;
                    break;
                }
                v = next;
            }
            bool tail = outcome < 0;
            if (tail) {
                // Exact exit law of the leftover bounded martingale.
                outcome = rng.next_uniform() < v / x_star ? 1 : 0;
            }
            tail_flag[i] = tail ? 1.0 : 0.0;
            hit[i] = outcome;
            terminal[i] = outcome ? x_star : 0.0;
            util_u[i] = outcome ? u_star : pu.value(0.0);
            util_env[i] = outcome ? env_star : pu.envelope(0.0);
        }
    });

    DriftlessResult res;
    res.hit_prob = mc::estimate(hit, "hit_prob", seed);
    res.mean_terminal = mc::estimate(terminal, "mean_terminal", seed);
    res.utility_u = mc::estimate(util_u, "utility_composed", seed);
    res.utility_env = mc::estimate(util_env, "utility_envelope", seed);
    res.tail_resolved_fraction = pairwise_sum(tail_flag) / static_cast<double>(n_paths);
    res.n_paths = n_paths;
    res.n_steps = n_steps;
    return res;
}

}  // namespace fundopt::bs
