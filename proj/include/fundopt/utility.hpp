#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fundopt/errors.hpp"
#include "fundopt/math.hpp"

namespace fundopt {

/// Utility function on the positive half-line: strictly increasing, strictly
/// concave, C1, Inada at both ends. Power utilities are normalized U(0) = 0;
/// log uses U(0) = -inf.
class UtilityFunction {
public:
    enum class Kind { power, log, custom };

    static UtilityFunction power(double p);
    static UtilityFunction log_utility();
    static UtilityFunction custom(std::function<double(double)> value,
                                  std::function<double(double)> deriv,
                                  std::function<double(double)> inverse_marginal,
                                  std::function<double(double)> conjugate,
                                  double value_at_zero);

    Kind kind() const { return kind_; }
    double exponent() const { return p_; }

    double value(double x) const;             // U(x), x >= 0
    double deriv(double x) const;             // U'(x), x > 0
    double inverse_marginal(double y) const;  // (U')^{-1}(y), y > 0
    double conjugate(double y) const;         // U*(y) = sup_x U(x) - xy
    double value_at_zero() const { return u0_; }

private:
    UtilityFunction() = default;

    Kind kind_ = Kind::power;
    double p_ = 0.5;
    double u0_ = 0.0;
    std::function<double(double)> f_, df_, inv_df_, conj_;
};

/// One affine piece of an incentive scheme: g(x) = value + slope * (x - x_lo)
/// on [x_lo, next piece).
struct IncentivePiece {
    double x_lo = 0.0;
    double slope = 0.0;
    double value = 0.0;  // g(x_lo)
};

/// Convex, nondecreasing, continuous, piecewise-affine payout with maximal
/// slope normalized to one.
class IncentiveScheme {
public:
    /// g(x) = lambda (x - k)^+, lambda in (0,1], k >= 0.
    static IncentiveScheme call_option(double lambda, double k);
    static IncentiveScheme identity();
    /// Validates ordering, continuity, convexity and the slope bound.
    static IncentiveScheme from_pieces(std::vector<IncentivePiece> pieces);

    double operator()(double x) const;
    double slope_right(double x) const;
    /// sup{x : g(x) = 0}; zero when g(0) > 0 or g has no flat-zero part.
    double zero_set_sup() const;
    bool constant_on(double x) const { return slope_right(x) == 0.0; }

    std::span<const IncentivePiece> pieces() const { return pieces_; }
    /// Breakpoints interior to the domain (piece boundaries above zero).
    std::vector<double> breakpoints() const;

    bool is_call() const { return is_call_; }
    double call_lambda() const { return call_lambda_; }
    double call_strike() const { return call_strike_; }

private:
    IncentiveScheme() = default;
    std::vector<IncentivePiece> pieces_;
    bool is_call_ = false;
    double call_lambda_ = 0.0;
    double call_strike_ = 0.0;
};

/// Maximal interval [a_minus, a_plus] where the concave envelope is affine,
/// gamma x + alpha, and strictly exceeds the composed utility inside.
struct EnvelopeSegment {
    double a_minus = 0.0;
    double a_plus = 0.0;
    double gamma = 0.0;
    double alpha = 0.0;
};

/// Composed utility U(g(x)) together with (once computed) its concave
/// envelope. Immutable; all queries are pure.
class PiecewiseUtility {
public:
    PiecewiseUtility(UtilityFunction u, IncentiveScheme g);

    double value(double x) const;        // composed utility, may be -inf
    double deriv(double x) const;        // right derivative where defined
    double beta() const { return beta_; }

    bool envelope_ready() const { return envelope_ready_; }
    double envelope(double x) const;     // concave envelope; requires ready
    double envelope_deriv(double x) const;
    std::span<const EnvelopeSegment> segments() const { return segments_; }
    std::vector<double> gamma_set() const;

    const UtilityFunction& utility() const { return u_; }
    const IncentiveScheme& incentive() const { return g_; }

    PiecewiseUtility with_segments(std::vector<EnvelopeSegment> segments) const;

private:
    UtilityFunction u_;
    IncentiveScheme g_;
    double beta_ = 0.0;
    bool envelope_ready_ = false;
    std::vector<EnvelopeSegment> segments_;  // sorted, disjoint, gamma decreasing
};

/// Grid for envelope/conjugate numerics. Defaults follow the library
/// convention: log-spaced cluster near beta, linear elsewhere.
struct GridSpec {
    double x_min = 0.0;
    double x_max = 30.0;
    std::size_t n_points = 2048;
};

std::vector<double> make_grid(const GridSpec& spec, const PiecewiseUtility& pu);

/// Composition U o g with the effective-domain edge beta computed exactly
/// from g's zero set and U(0). The envelope is not yet available.
PiecewiseUtility compose(const UtilityFunction& u, const IncentiveScheme& g);

/// Closed-form envelope for power utility with a call incentive:
/// single segment [0, k/(1-p)] with slope lambda^p (p k / (1-p))^(p-1).
PiecewiseUtility concavify_closed_form(const UtilityFunction& u, const IncentiveScheme& g);

/// Upper concave envelope via a monotone-chain upper hull over grid samples,
/// with each candidate segment refined by bisection on the tangency
/// condition. Segments shorter than the local grid spacing are discarded.
PiecewiseUtility concavify_numeric(const PiecewiseUtility& pu, const GridSpec& grid);

/// Convex conjugate of the composed utility with subdifferential queries.
class DualUtility {
public:
    struct Interval {
        double lo = 0.0;
        double hi = 0.0;
    };

    explicit DualUtility(PiecewiseUtility pu);

    double value(double y) const;               // conjugate, y > 0
    Interval neg_subdifferential(double y) const;
    std::vector<double> kinks() const;          // the envelope slope set
    /// Threshold above which the conjugate is constant (inf when absent).
    double y_flat() const { return y_flat_; }

    const PiecewiseUtility& primal() const { return pu_; }

private:
    double sup_over_pieces(double y, double* arg_lo, double* arg_hi) const;

    PiecewiseUtility pu_;
    bool closed_form_call_ = false;
    double p_ = 0.0, lambda_ = 0.0, strike_ = 0.0, y_star_ = 0.0;
    double y_flat_ = kInf;
};

DualUtility conjugate(const PiecewiseUtility& pu);

/// max over the grid of |inf_y (conjugate(y) + x y) - envelope(x)|.
double conjugate_roundtrip_check(const DualUtility& du, const GridSpec& grid);

struct SlopeBoundReport {
    bool ok = true;
    double worst_x = 0.0;
    double envelope_slope = 0.0;
    double bound = 0.0;
};

/// Checks (envelope)'(x) <= U'(g(x)) on a grid beyond the first segment.
SlopeBoundReport slope_bound_check(const PiecewiseUtility& pu, const GridSpec& grid);

}  // namespace fundopt
