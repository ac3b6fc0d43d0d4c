#include "fundopt/utility.hpp"

#include <algorithm>
#include <cmath>

namespace fundopt {

// ---------------------------------------------------------------------------
// UtilityFunction
// ---------------------------------------------------------------------------

UtilityFunction UtilityFunction::power(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("power utility: p must lie in (0,1)");
    }
    UtilityFunction u;
    u.kind_ = Kind::power;
    u.p_ = p;
    u.u0_ = 0.0;  // x^p / p -> 0 as x -> 0
    return u;
}

UtilityFunction UtilityFunction::log_utility() {
    UtilityFunction u;
    u.kind_ = Kind::log;
    u.u0_ = -kInf;
    return u;
}

UtilityFunction UtilityFunction::custom(std::function<double(double)> value,
                                        std::function<double(double)> deriv,
                                        std::function<double(double)> inverse_marginal,
                                        std::function<double(double)> conjugate,
                                        double value_at_zero) {
    UtilityFunction u;
    u.kind_ = Kind::custom;
    u.f_ = std::move(value);
    u.df_ = std::move(deriv);
    u.inv_df_ = std::move(inverse_marginal);
    u.conj_ = std::move(conjugate);
    u.u0_ = value_at_zero;
    return u;
}

double UtilityFunction::value(double x) const {
    if (x < 0.0) throw DomainError("utility: negative wealth");
    if (x == 0.0) return u0_;
    switch (kind_) {
        case Kind::power:
            return std::pow(x, p_) / p_;
        case Kind::log:
            return std::log(x);
        case Kind::custom:
            return f_(x);
    }
    return 0.0;
}

double UtilityFunction::deriv(double x) const {
    if (!(x > 0.0)) throw DomainError("utility deriv: x must be positive");
    switch (kind_) {
        case Kind::power:
            return std::pow(x, p_ - 1.0);
        case Kind::log:
            return 1.0 / x;
        case Kind::custom:
            return df_(x);
    }
    return 0.0;
}

double UtilityFunction::inverse_marginal(double y) const {
    if (!(y > 0.0)) throw DomainError("inverse marginal: y must be positive");
    switch (kind_) {
        case Kind::power:
            return std::pow(y, 1.0 / (p_ - 1.0));
        case Kind::log:
            return 1.0 / y;
        case Kind::custom:
            return inv_df_(y);
    }
    return 0.0;
}

double UtilityFunction::conjugate(double y) const {
    if (!(y > 0.0)) throw DomainError("conjugate: y must be positive");
    switch (kind_) {
        case Kind::power:
            return (1.0 - p_) / p_ * std::pow(y, p_ / (p_ - 1.0));
        case Kind::log:
            return -std::log(y) - 1.0;
        case Kind::custom:
            return conj_(y);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// IncentiveScheme
// ---------------------------------------------------------------------------

namespace {

constexpr double kSlopeTol = 1e-12;

void validate_pieces(const std::vector<IncentivePiece>& pieces) {
    if (pieces.empty() || pieces.front().x_lo != 0.0) {
        throw DomainError("incentive: pieces must start at x = 0");
    }
    double max_slope = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& pc = pieces[i];
        if (pc.value < 0.0 || pc.slope < 0.0) {
            throw DomainError("incentive: negative value or slope");
        }
        if (pc.slope > 1.0 + kSlopeTol) {
            throw SlopeViolation("incentive: slope exceeds the normalized maximum of 1");
        }
        max_slope = std::max(max_slope, pc.slope);
        if (i + 1 < pieces.size()) {
            const auto& nx = pieces[i + 1];
            if (!(nx.x_lo > pc.x_lo)) {
                throw DomainError("incentive: breakpoints must be strictly increasing");
            }
            if (nx.slope + kSlopeTol < pc.slope) {
                throw DomainError("incentive: nonconvex piece list (decreasing slope)");
            }
            double cont = pc.value + pc.slope * (nx.x_lo - pc.x_lo);
            double scale = std::max({1.0, std::abs(cont), std::abs(nx.value)});
            if (std::abs(cont - nx.value) > 1e-9 * scale) {
                throw DomainError("incentive: discontinuous at breakpoint");
            }
        }
    }
    if (max_slope <= 0.0) {
        throw DomainError("incentive: scheme is constant");
    }
}

}  // namespace

IncentiveScheme IncentiveScheme::call_option(double lambda, double k) {
    if (!(lambda > 0.0)) throw DomainError("call incentive: lambda must be positive");
    if (lambda > 1.0 + kSlopeTol) throw SlopeViolation("call incentive: lambda exceeds 1");
    if (k < 0.0) throw DomainError("call incentive: negative strike");
    IncentiveScheme g;
    if (k > 0.0) {
        g.pieces_ = {{0.0, 0.0, 0.0}, {k, lambda, 0.0}};
    } else {
        g.pieces_ = {{0.0, lambda, 0.0}};
    }
    g.is_call_ = true;
    g.call_lambda_ = lambda;
    g.call_strike_ = k;
    return g;
}

IncentiveScheme IncentiveScheme::identity() {
    return call_option(1.0, 0.0);
}

IncentiveScheme IncentiveScheme::from_pieces(std::vector<IncentivePiece> pieces) {
    validate_pieces(pieces);
    IncentiveScheme g;
    g.pieces_ = std::move(pieces);
    // Recognize the parametric call form.
    if (g.pieces_.size() == 2 && g.pieces_[0].slope == 0.0 && g.pieces_[0].value == 0.0 &&
        g.pieces_[1].value == 0.0) {
        g.is_call_ = true;
        g.call_lambda_ = g.pieces_[1].slope;
        g.call_strike_ = g.pieces_[1].x_lo;
    } else if (g.pieces_.size() == 1 && g.pieces_[0].value == 0.0) {
        g.is_call_ = true;
        g.call_lambda_ = g.pieces_[0].slope;
        g.call_strike_ = 0.0;
    }
    return g;
}

double IncentiveScheme::operator()(double x) const {
    if (x < 0.0) throw DomainError("incentive: negative wealth");
    std::size_t i = pieces_.size();
    while (i > 1 && pieces_[i - 1].x_lo > x) --i;
    const auto& pc = pieces_[i - 1];
    return pc.value + pc.slope * (x - pc.x_lo);
}

double IncentiveScheme::slope_right(double x) const {
    if (x < 0.0) throw DomainError("incentive: negative wealth");
    std::size_t i = pieces_.size();
    while (i > 1 && pieces_[i - 1].x_lo > x) --i;
    return pieces_[i - 1].slope;
}

double IncentiveScheme::zero_set_sup() const {
    if (pieces_.front().value > 0.0) return 0.0;
    double z = 0.0;
    for (const auto& pc : pieces_) {
        if (pc.value == 0.0) {
            z = pc.x_lo;
            if (pc.slope > 0.0) break;
        } else {
            break;
        }
    }
    return z;
}

std::vector<double> IncentiveScheme::breakpoints() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < pieces_.size(); ++i) {
        out.push_back(pieces_[i].x_lo);
    }
    return out;
}

// ---------------------------------------------------------------------------
// PiecewiseUtility
// ---------------------------------------------------------------------------

PiecewiseUtility::PiecewiseUtility(UtilityFunction u, IncentiveScheme g)
    : u_(std::move(u)), g_(std::move(g)) {
    beta_ = (u_.value_at_zero() > -kInf) ? 0.0 : g_.zero_set_sup();
}

double PiecewiseUtility::value(double x) const {
    double gx = g_(x);
    if (gx > 0.0) return u_.value(gx);
    return u_.value_at_zero();
}

double PiecewiseUtility::deriv(double x) const {
    double s = g_.slope_right(x);
    if (s == 0.0) return 0.0;
    double gx = g_(x);
    if (gx <= 0.0) return kInf;  // Inada blow-up at the domain edge
    return u_.deriv(gx) * s;
}

double PiecewiseUtility::envelope(double x) const {
    if (!envelope_ready_) throw DomainError("envelope not computed");
    // Segments are few; linear scan with early exit.
    for (const auto& seg : segments_) {
        if (x < seg.a_minus) break;
        if (x <= seg.a_plus) return seg.gamma * x + seg.alpha;
    }
    return value(x);
}

double PiecewiseUtility::envelope_deriv(double x) const {
    if (!envelope_ready_) throw DomainError("envelope not computed");
    for (const auto& seg : segments_) {
        if (x < seg.a_minus) break;
        if (x <= seg.a_plus) return seg.gamma;
    }
    return deriv(x);
}

std::vector<double> PiecewiseUtility::gamma_set() const {
    std::vector<double> out;
    out.reserve(segments_.size());
    for (const auto& seg : segments_) out.push_back(seg.gamma);
    return out;
}

PiecewiseUtility PiecewiseUtility::with_segments(std::vector<EnvelopeSegment> segments) const {
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        if (!(segments[i].a_plus <= segments[i + 1].a_minus) ||
            !(segments[i].gamma > segments[i + 1].gamma)) {
            throw DomainError("envelope segments must be ordered with decreasing slopes");
        }
    }
    PiecewiseUtility out = *this;
    out.segments_ = std::move(segments);
    out.envelope_ready_ = true;
    return out;
}

// ---------------------------------------------------------------------------
// Composition and closed-form envelope
// ---------------------------------------------------------------------------

PiecewiseUtility compose(const UtilityFunction& u, const IncentiveScheme& g) {
    return PiecewiseUtility(u, g);
}

PiecewiseUtility concavify_closed_form(const UtilityFunction& u, const IncentiveScheme& g) {
    if (u.kind() != UtilityFunction::Kind::power || !g.is_call()) {
        throw DomainError("closed-form envelope requires power utility and a call incentive");
    }
    PiecewiseUtility pu = compose(u, g);
    double k = g.call_strike();
    if (k == 0.0) {
        return pu.with_segments({});  // no kink, already concave
    }
    double p = u.exponent();
    double lambda = g.call_lambda();
    double x_star = k / (1.0 - p);
    double y_star = std::pow(lambda, p) * std::pow(p * k / (1.0 - p), p - 1.0);
    return pu.with_segments({{0.0, x_star, y_star, 0.0}});
}

// ---------------------------------------------------------------------------
// Grid construction
// ---------------------------------------------------------------------------

std::vector<double> make_grid(const GridSpec& spec, const PiecewiseUtility& pu) {
    if (!(spec.x_max >= spec.x_min) || spec.n_points < 1) {
        throw InvalidRange("grid: require x_max >= x_min and n_points >= 1");
    }
    if (spec.n_points == 1) {
        return {std::max(spec.x_min, 0.0)};
    }
    double x_lo = std::max(spec.x_min, 0.0);
    double beta = pu.beta();
    std::vector<double> pts;
    pts.reserve(spec.n_points + 16);

    std::size_t n_lin = spec.n_points - spec.n_points / 4;
    for (double x : linspace(x_lo, spec.x_max, n_lin)) pts.push_back(x);

    // Log-spaced cluster just above max(beta, x_lo) to resolve Inada behavior.
    double base = std::max(beta, x_lo);
    if (base < spec.x_max && spec.n_points / 4 >= 2) {
        double span = std::min(1.0, 0.25 * (spec.x_max - base));
        double delta = 1e-9 * (1.0 + std::abs(base));
        for (double t : logspace(delta, span, spec.n_points / 4)) pts.push_back(base + t);
    }

    for (double b : pu.incentive().breakpoints()) {
        if (b >= x_lo && b <= spec.x_max) pts.push_back(b);
    }
    if (beta >= x_lo && beta <= spec.x_max) pts.push_back(beta);
    pts.push_back(x_lo);
    pts.push_back(spec.x_max);

    std::sort(pts.begin(), pts.end());
    std::vector<double> out;
    out.reserve(pts.size());
    for (double x : pts) {
        if (out.empty() || x - out.back() > 1e-13 * std::max(1.0, std::abs(x))) {
            out.push_back(x);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Numeric envelope
// ---------------------------------------------------------------------------

namespace {

struct Sample {
    double x;
    double y;
};

/// Indices of the upper concave hull of samples sorted by x.
std::vector<std::size_t> upper_hull(const std::vector<Sample>& pts) {
    std::vector<std::size_t> hull;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (hull.size() >= 2) {
            const Sample& p1 = pts[hull[hull.size() - 2]];
            const Sample& p2 = pts[hull[hull.size() - 1]];
            const Sample& p3 = pts[i];
            // p2 strictly above chord p1-p3 <=> keep.
            double d = (p3.x - p1.x) * (p2.y - p1.y) - (p3.y - p1.y) * (p2.x - p1.x);
            double tol = 1e-12 * (std::abs(p1.y) + std::abs(p2.y) + std::abs(p3.y) + 1.0) *
                         (p3.x - p1.x);
            if (d > tol) break;
            hull.pop_back();
        }
        hull.push_back(i);
    }
    return hull;
}

/// Tangency residual at the right touch point: psi(t) = U'(t)(t-a) - (U(t)-U(a)).
/// Positive before the touch, negative beyond it.
double psi_right(const PiecewiseUtility& pu, double a, double ua, double t) {
    return pu.deriv(t) * (t - a) - (pu.value(t) - ua);
}

/// Tangency residual at the left touch point.
double psi_left(const PiecewiseUtility& pu, double b, double ub, double t) {
    return pu.deriv(t) * (b - t) - (ub - pu.value(t));
}

/// Bisection root of f near x0, where f decreases through zero. The bracket
/// is found by an expanding scan; returns x0 unchanged when none exists
/// inside [lo_lim, hi_lim].
double refine_root(const std::function<double(double)>& f, double x0, double step,
                   double lo_lim, double hi_lim) {
    double f0 = f(x0);
    if (f0 == 0.0) return x0;
    double lo = x0, hi = x0;
    if (f0 > 0.0) {  // root lies to the right
        bool found = false;
        for (double w = step; !found; w *= 2.0) {
            hi = std::min(x0 + w, hi_lim);
            if (f(hi) <= 0.0) {
                found = true;
            } else if (hi >= hi_lim) {
                return x0;
            }
        }
    } else {  // root lies to the left
        bool found = false;
        for (double w = step; !found; w *= 2.0) {
            lo = std::max(x0 - w, lo_lim);
            if (f(lo) >= 0.0) {
                found = true;
            } else if (lo <= lo_lim) {
                return x0;
            }
        }
    }
    BisectOptions opt;
    opt.x_tol = 1e-10;
    opt.max_iter = 200;
    return bisect(f, lo, hi, opt);
}

}  // namespace

PiecewiseUtility concavify_numeric(const PiecewiseUtility& pu, const GridSpec& grid) {
    if (grid.n_points < 64) {
        throw InvalidRange("concavify_numeric: need at least 64 grid points");
    }
    std::vector<double> xs = make_grid(grid, pu);
    std::vector<Sample> pts;
    pts.reserve(xs.size());
    for (double x : xs) {
        double v = pu.value(x);
        if (std::isfinite(v)) pts.push_back({x, v});
    }
    if (pts.empty()) {
        throw DomainError("concavify_numeric: composed utility is -inf on the whole grid");
    }

    std::vector<std::size_t> hull = upper_hull(pts);

    const double coarse_dx = (grid.x_max - std::max(grid.x_min, 0.0)) /
                             static_cast<double>(grid.n_points);
    const double domain_left = pts.front().x;
    const double domain_right = pts.back().x;

    std::vector<EnvelopeSegment> segments;
    for (std::size_t e = 0; e + 1 < hull.size(); ++e) {
        std::size_t i = hull[e], j = hull[e + 1];
        const Sample& pa = pts[i];
        const Sample& pb = pts[j];
        if (j <= i + 1) continue;
        // Candidate only if the chord strictly exceeds the function inside.
        double slope = (pb.y - pa.y) / (pb.x - pa.x);
        double max_gap = 0.0;
        for (std::size_t m = i + 1; m < j; ++m) {
            double chord = pa.y + slope * (pts[m].x - pa.x);
            max_gap = std::max(max_gap, chord - pts[m].y);
        }
        if (max_gap <= 1e-7 * (1.0 + std::abs(pa.y) + std::abs(pb.y))) continue;

        bool anchored_left = (i == 0);
        double a = pa.x, b = pb.x;
        double local_dx = std::max(coarse_dx * 0.25, 1e-8);
        for (int iter = 0; iter < 8; ++iter) {
            double prev_a = a, prev_b = b;
            double ua = pu.value(a);
            b = refine_root([&](double t) { return psi_right(pu, a, ua, t); }, b, local_dx,
                            a + 1e-12, domain_right);
            if (!anchored_left) {
                double ub = pu.value(b);
                a = refine_root([&](double t) { return psi_left(pu, b, ub, t); }, a, local_dx,
                                domain_left, b - 1e-12);
            }
            if (std::abs(a - prev_a) + std::abs(b - prev_b) <
                1e-11 * (1.0 + std::abs(a) + std::abs(b))) {
                break;
            }
        }
        if (b - a < coarse_dx) continue;  // not resolvable on this grid
        double ua = pu.value(a);
        double gamma = (pu.value(b) - ua) / (b - a);
        segments.push_back({a, b, gamma, ua - gamma * a});
    }

    // Merge overlaps that refinement may have produced, keep slopes decreasing.
    std::sort(segments.begin(), segments.end(),
              [](const EnvelopeSegment& l, const EnvelopeSegment& r) {
                  return l.a_minus < r.a_minus;
              });
    std::vector<EnvelopeSegment> merged;
    for (const auto& seg : segments) {
        if (!merged.empty() && seg.a_minus < merged.back().a_plus + 1e-9) {
            auto& last = merged.back();
            double a = std::min(last.a_minus, seg.a_minus);
            double b = std::max(last.a_plus, seg.a_plus);
            double ua = pu.value(a);
            double gamma = (pu.value(b) - ua) / (b - a);
            last = {a, b, gamma, ua - gamma * a};
        } else {
            merged.push_back(seg);
        }
    }
    return pu.with_segments(std::move(merged));
}

// ---------------------------------------------------------------------------
// DualUtility
// ---------------------------------------------------------------------------

DualUtility::DualUtility(PiecewiseUtility pu) : pu_(std::move(pu)) {
    if (!pu_.envelope_ready()) {
        throw DomainError("conjugate: envelope must be computed first");
    }
    const auto& u = pu_.utility();
    const auto& g = pu_.incentive();
    if (u.kind() == UtilityFunction::Kind::power && g.is_call() && g.call_strike() > 0.0) {
        closed_form_call_ = true;
        p_ = u.exponent();
        lambda_ = g.call_lambda();
        strike_ = g.call_strike();
        y_star_ = std::pow(lambda_, p_) * std::pow(p_ * strike_ / (1.0 - p_), p_ - 1.0);
    }
    if (u.value_at_zero() > -kInf) {
        auto segs = pu_.segments();
        if (!segs.empty() && segs.front().a_minus <= 1e-12) {
            y_flat_ = segs.front().gamma;
        } else {
            double g0 = g(0.0);
            double s0 = g.slope_right(0.0);
            y_flat_ = (g0 > 0.0 && s0 > 0.0) ? u.deriv(g0) * s0 : kInf;
        }
    }
}

double DualUtility::value(double y) const {
    if (!(y > 0.0)) throw DomainError("conjugate: y must be positive");
    if (closed_form_call_) {
        if (y > y_star_) return 0.0;
        return (1.0 - p_) / p_ * std::pow(y / lambda_, p_ / (p_ - 1.0)) - strike_ * y;
    }
    return sup_over_pieces(y, nullptr, nullptr);
}

double DualUtility::sup_over_pieces(double y, double* arg_lo, double* arg_hi) const {
    const auto& u = pu_.utility();
    const auto& g = pu_.incentive();
    auto pieces = g.pieces();
    double best = -kInf;
    double lo = 0.0, hi = 0.0;
    auto consider = [&](double x, double val) {
        if (!std::isfinite(val)) return;
        if (!std::isfinite(best)) {
            best = val;
            lo = hi = x;
            return;
        }
        double tol = 1e-11 * (1.0 + std::abs(val) + std::abs(best));
        if (val > best + tol) {
            best = val;
            lo = hi = x;
        } else if (val >= best - tol) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            best = std::max(best, val);
        }
    };
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& pc = pieces[i];
        double x_hi = (i + 1 < pieces.size()) ? pieces[i + 1].x_lo : kInf;
        if (pc.slope == 0.0) {
            consider(pc.x_lo, pu_.value(pc.x_lo) - pc.x_lo * y);
            continue;
        }
        double target = u.inverse_marginal(y / pc.slope);  // g-value at the stationary point
        double x = pc.x_lo + (target - pc.value) / pc.slope;
        x = std::clamp(x, pc.x_lo, x_hi);
        consider(x, pu_.value(x) - x * y);
    }
    if (arg_lo) *arg_lo = lo;
    if (arg_hi) *arg_hi = hi;
    return best;
}

DualUtility::Interval DualUtility::neg_subdifferential(double y) const {
    if (!(y > 0.0)) throw DomainError("subdifferential: y must be positive");
    for (const auto& seg : pu_.segments()) {
        if (std::abs(y - seg.gamma) <= 1e-9 * std::max(1.0, seg.gamma)) {
            return {seg.a_minus, seg.a_plus};
        }
    }
    Interval iv;
    sup_over_pieces(y, &iv.lo, &iv.hi);
    return iv;
}

std::vector<double> DualUtility::kinks() const {
    return pu_.gamma_set();
}

DualUtility conjugate(const PiecewiseUtility& pu) {
    return DualUtility(pu);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

double conjugate_roundtrip_check(const DualUtility& du, const GridSpec& grid) {
    const PiecewiseUtility& pu = du.primal();
    std::vector<double> xs = make_grid(grid, pu);
    std::vector<double> gammas = du.kinks();

    double worst = 0.0;
    for (double x : xs) {
        double env = pu.envelope(x);
        if (!std::isfinite(env)) continue;

        auto h = [&](double y) { return du.value(y) + x * y; };

        // The minimizer is y = envelope'(x); bracket around it and also try
        // every kink slope explicitly.
        double y0 = pu.envelope_deriv(x);
        if (!std::isfinite(y0) || y0 <= 0.0) y0 = 1.0;
        double best = kInf;
        for (double gm : gammas) best = std::min(best, h(gm));
        double y_lo = y0 / 8.0, y_hi = y0 * 8.0;
        GoldenOptions gopt;
        gopt.x_tol = 1e-13;
        gopt.max_iter = 240;
        best = std::min(best, golden_min(h, y_lo, y_hi, gopt).value);
        worst = std::max(worst, std::abs(best - env));
    }
    return worst;
}

SlopeBoundReport slope_bound_check(const PiecewiseUtility& pu, const GridSpec& grid) {
    std::vector<double> xs = make_grid(grid, pu);
    auto segs = pu.segments();
    double x_from = segs.empty() ? pu.beta() : segs.front().a_plus;
    SlopeBoundReport rep;
    double worst_margin = -kInf;
    for (double x : xs) {
        if (x <= x_from) continue;
        double gx = pu.incentive()(x);
        if (!(gx > 0.0)) continue;
        double lhs = pu.envelope_deriv(x);
        double rhs = pu.utility().deriv(gx);  // maximal slope c = 1
        double margin = lhs - rhs;
        if (margin > worst_margin) {
            worst_margin = margin;
            rep.worst_x = x;
            rep.envelope_slope = lhs;
            rep.bound = rhs;
        }
        if (margin > 1e-9 * std::max(1.0, rhs)) {
            rep.ok = false;
        }
    }
    return rep;
}

}  // namespace fundopt
