#include "fundopt/discrete.hpp"

#include <algorithm>
#include <cmath>

#include "fundopt/math.hpp"

namespace fundopt::discrete {

FiniteMarket::FiniteMarket(std::vector<MarketState> states) : states_(std::move(states)) {
    if (states_.size() < 2) {
        throw DomainError("finite market: need at least two states");
    }
    double psum = 0.0;
    bool up = false, down = false;
    for (const auto& st : states_) {
        if (!(st.prob > 0.0)) throw DomainError("finite market: probabilities must be positive");
        if (!(st.gross_return > 0.0)) throw DomainError("finite market: returns must be positive");
        psum += st.prob;
        up = up || st.gross_return > 1.0;
        down = down || st.gross_return < 1.0;
    }
    if (std::abs(psum - 1.0) > 1e-12 * states_.size()) {
        throw DomainError("finite market: probabilities must sum to one");
    }
    if (!up || !down) {
        throw DomainError("finite market: need a return above and below one (no-arbitrage)");
    }
}

double FiniteMarket::h_min(double x) const {
    double hm = -kInf;
    for (const auto& st : states_) {
        double d = st.gross_return - 1.0;
        if (d > 0.0) hm = std::max(hm, -x / d);
    }
    return hm;
}

double FiniteMarket::h_max(double x) const {
    double hm = kInf;
    for (const auto& st : states_) {
        double d = st.gross_return - 1.0;
        if (d < 0.0) hm = std::min(hm, -x / d);
    }
    return hm;
}

std::vector<std::vector<double>> FiniteMarket::emm_vertices() const {
    std::vector<std::vector<double>> verts;
    const std::size_t n = states_.size();
    for (std::size_t i = 0; i < n; ++i) {
        double ri = states_[i].gross_return;
        if (ri == 1.0) {
            std::vector<double> q(n, 0.0);
            q[i] = 1.0;
            verts.push_back(std::move(q));
            continue;
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            double rj = states_[j].gross_return;
            if ((ri - 1.0) * (rj - 1.0) >= 0.0) continue;
            std::vector<double> q(n, 0.0);
            q[i] = (1.0 - rj) / (ri - rj);
            q[j] = 1.0 - q[i];
            verts.push_back(std::move(q));
        }
    }
    return verts;
}

std::vector<double> FiniteMarket::binomial_emm() const {
    if (states_.size() != 2) {
        throw DomainError("binomial_emm: market has more than two states");
    }
    double r1 = states_[0].gross_return, r2 = states_[1].gross_return;
    double q1 = (1.0 - r2) / (r1 - r2);
    return {q1, 1.0 - q1};
}

// ---------------------------------------------------------------------------
// Primal
// ---------------------------------------------------------------------------

PrimalResult primal_value_exact(const FiniteMarket& mkt, const PiecewiseUtility& pu,
                                double x, bool use_envelope) {
    if (!(x > 0.0)) throw DomainError("primal_value_exact: x must be positive");
    if (use_envelope && !pu.envelope_ready()) {
        throw DomainError("primal_value_exact: envelope not computed");
    }
    const double h_lo = mkt.h_min(x);
    const double h_hi = mkt.h_max(x);

    auto f = [&](double w) { return use_envelope ? pu.envelope(w) : pu.value(w); };
    auto objective = [&](double h) {
        double s = 0.0;
        for (const auto& st : mkt.states()) {
            double w = x + h * (st.gross_return - 1.0);
            if (w < 0.0) w = 0.0;  // clip roundoff at the admissibility edge
            double v = f(w);
            if (v == -kInf) return -kInf;
            s += st.prob * v;
        }
        return s;
    };

    // Wealth levels where the integrand kinks: incentive breakpoints, the
    // domain edge, and envelope endpoints.
    std::vector<double> crit_w = pu.incentive().breakpoints();
    crit_w.push_back(pu.beta());
    crit_w.push_back(0.0);
    if (use_envelope) {
        for (const auto& seg : pu.segments()) {
            crit_w.push_back(seg.a_minus);
            crit_w.push_back(seg.a_plus);
        }
    }
    std::vector<double> knots = {h_lo, h_hi};
    for (const auto& st : mkt.states()) {
        double d = st.gross_return - 1.0;
        if (d == 0.0) continue;
        for (double c : crit_w) {
            double h = (c - x) / d;
            if (h > h_lo && h < h_hi) knots.push_back(h);
        }
    }
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-13; }),
                knots.end());

    // Concave on each smooth piece: golden section per piece is exact.
    double best = -kInf;
    std::vector<double> winners;
    auto consider = [&](double h) {
        double v = objective(h);
        if (v == -kInf) return;
        double tol = 1e-11 * (1.0 + std::abs(v) + std::abs(best));
        if (v > best + tol) {
            best = v;
            winners.clear();
            winners.push_back(h);
        } else if (v >= best - tol) {
            best = std::max(best, v);
            winners.push_back(h);
        }
    };
    for (double h : knots) consider(h);
    GoldenOptions gopt;
    gopt.x_tol = 1e-13;
    gopt.max_iter = 200;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        auto res = golden_min([&](double h) { return -objective(h); }, knots[i], knots[i + 1], gopt);
        consider(res.x);
    }

    PrimalResult out;
    out.value = best;
    out.h_lo = *std::min_element(winners.begin(), winners.end());
    out.h_hi = *std::max_element(winners.begin(), winners.end());
    return out;
}

// ---------------------------------------------------------------------------
// Dual
// ---------------------------------------------------------------------------

namespace {

double dual_objective(const FiniteMarket& mkt, const DualUtility& du, double y,
                      std::span<const double> q) {
    double s = 0.0;
    auto states = mkt.states();
    for (std::size_t i = 0; i < states.size(); ++i) {
        double zi = y * q[i] / states[i].prob;
        if (zi <= 0.0) return kInf;  // conjugate blows up toward the boundary
        s += states[i].prob * du.value(zi);
    }
    return s;
}

}  // namespace

DualResult dual_value_exact(const FiniteMarket& mkt, const DualUtility& du, double y) {
    if (!(y > 0.0)) throw DomainError("dual_value_exact: y must be positive");
    const std::size_t n = mkt.size();
    if (n > 10) {
        throw InvalidRange("dual_value_exact: exact enumeration supports at most 10 states");
    }
    DualResult res;
    if (n == 2) {
        res.q = mkt.binomial_emm();
        res.value = dual_objective(mkt, du, y, res.q);
        res.boundary = std::min(res.q[0], res.q[1]) < 1e-7;
        return res;
    }
    // Interior start: average of the polytope closure vertices.
    auto verts = mkt.emm_vertices();
    std::vector<double> q(n, 0.0);
    for (const auto& v : verts) {
        for (std::size_t i = 0; i < n; ++i) q[i] += v[i];
    }
    for (double& qi : q) qi /= static_cast<double>(verts.size());

    // Cyclic minimization along null-space directions of (sum q = 1,
    // sum q r = 1); every state triple spans one direction.
    auto states = mkt.states();
    double value = dual_objective(mkt, du, y, q);
    GoldenOptions gopt;
    gopt.x_tol = 1e-13;
    gopt.max_iter = 160;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double before = value;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                for (std::size_t m = j + 1; m < n; ++m) {
                    double di = states[j].gross_return - states[m].gross_return;
                    double dj = states[m].gross_return - states[i].gross_return;
                    double dm = states[i].gross_return - states[j].gross_return;
                    double norm = std::abs(di) + std::abs(dj) + std::abs(dm);
                    if (norm < 1e-14) continue;
                    di /= norm;
                    dj /= norm;
                    dm /= norm;
                    // Step range keeping q strictly inside the simplex.
                    double t_lo = -kInf, t_hi = kInf;
                    auto bound = [&](double qi, double d) {
                        if (d > 0.0) t_lo = std::max(t_lo, -qi / d);
                        if (d < 0.0) t_hi = std::min(t_hi, -qi / d);
                    };
                    bound(q[i], di);
                    bound(q[j], dj);
                    bound(q[m], dm);
                    if (!(t_hi > t_lo)) continue;
                    auto line = [&](double t) {
                        std::vector<double> qq = q;
                        qq[i] += t * di;
                        qq[j] += t * dj;
                        qq[m] += t * dm;
                        return dual_objective(mkt, du, y, qq);
                    };
                    auto gr = golden_min(line, t_lo, t_hi, gopt);
                    if (gr.value < value) {
                        q[i] += gr.x * di;
                        q[j] += gr.x * dj;
                        q[m] += gr.x * dm;
                        value = gr.value;
                    }
                }
            }
        }
        if (before - value < 1e-13 * (1.0 + std::abs(value))) break;
    }
    res.q = q;
    res.value = value;
    res.boundary = *std::min_element(q.begin(), q.end()) < 1e-7;
    return res;
}

Marginal marginal_value(const FiniteMarket& mkt, const DualUtility& du, double x) {
    if (!(x > 0.0)) throw DomainError("marginal_value: x must be positive");
    auto xi = [&](double y) { return dual_value_exact(mkt, du, y).value + x * y; };

    double y_hi = 1.0;
    int guard = 0;
    // xi is convex; expand until the right side is clearly increasing.
    while (xi(y_hi * 2.0) < xi(y_hi) && ++guard < 60) y_hi *= 2.0;
    y_hi *= 4.0;
    GoldenOptions gopt;
    gopt.x_tol = 1e-13;
    gopt.max_iter = 240;
    auto gr = golden_min(xi, 1e-10, y_hi, gopt);

    double best_y = gr.x;
    double best = gr.value;
    // The minimizer often sits on a kink of xi (an atom of the dual optimizer
    // crossing a conjugate kink); snap to the exact kink value when it ties.
    auto opt = dual_value_exact(mkt, du, best_y);
    auto states = mkt.states();
    for (double gm : du.kinks()) {
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (opt.q[i] <= 0.0) continue;
            double cand = gm * states[i].prob / opt.q[i];
            if (!(cand > 0.0)) continue;
            double v = xi(cand);
            if (v < best - 1e-14 * (1.0 + std::abs(best))) {
                best = v;
                best_y = cand;
                continue;
            }
            bool ties = std::abs(v - best) <= 1e-11 * (1.0 + std::abs(best));
            bool near = std::abs(cand - best_y) <= 1e-6 * std::max(1.0, best_y);
            if (ties && near) {
                best_y = cand;
                best = std::min(best, v);
            }
        }
    }
    Marginal out;
    out.y = best_y;
    out.w = best;
    out.at_y = dual_value_exact(mkt, du, best_y);
    return out;
}

// ---------------------------------------------------------------------------
// Atoms, gap, selection
// ---------------------------------------------------------------------------

AtomReport atom_report(const FiniteMarket& mkt, const DualUtility& du, double y) {
    if (!(y > 0.0)) throw DomainError("atom_report: y must be positive");
    auto opt = dual_value_exact(mkt, du, y);
    auto states = mkt.states();
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < states.size(); ++i) {
        double val = y * opt.q[i] / states[i].prob;
        bool merged = false;
        for (auto& a : atoms) {
            if (std::abs(a.value - val) <= 1e-12 * std::max(1.0, std::abs(val))) {
                a.mass += states[i].prob;
                merged = true;
                break;
            }
        }
        if (!merged) atoms.push_back({val, states[i].prob});
    }
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& a, const Atom& b) { return a.value < b.value; });

    AtomReport rep;
    rep.delta = std::move(atoms);
    rep.gamma = du.kinks();
    for (const auto& a : rep.delta) {
        for (double gm : rep.gamma) {
            if (std::abs(a.value - gm) <= 1e-9 * std::max(1.0, gm)) {
                rep.intersection.push_back(gm);
            }
        }
    }
    rep.condition_holds = rep.intersection.empty();
    return rep;
}

BidualityReport biduality_gap(const FiniteMarket& mkt, const PiecewiseUtility& pu, double x) {
    BidualityReport rep;
    rep.primal_original = primal_value_exact(mkt, pu, x, false);
    rep.primal_envelope = primal_value_exact(mkt, pu, x, true);
    rep.u = rep.primal_original.value;
    rep.w = rep.primal_envelope.value;
    rep.gap = std::max(0.0, rep.w - rep.u);
    return rep;
}

SelectionResult subdifferential_selection(const FiniteMarket& mkt, const DualUtility& du,
                                          double x) {
    Marginal mg = marginal_value(mkt, du, x);
    auto states = mkt.states();
    const std::size_t n = states.size();

    SelectionResult res;
    res.y = mg.y;
    res.per_state.resize(n);
    std::vector<double> qw(n);  // q_i weights in the budget
    for (std::size_t i = 0; i < n; ++i) {
        double zi = mg.y * mg.at_y.q[i] / states[i].prob;
        res.per_state[i] = du.neg_subdifferential(zi);
        qw[i] = mg.at_y.q[i];
    }
    double total_lo = 0.0, total_hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total_lo += qw[i] * res.per_state[i].lo;
        total_hi += qw[i] * res.per_state[i].hi;
    }
    double tol = 1e-8 * (1.0 + std::abs(x) + std::abs(total_hi));
    if (x < total_lo - tol || x > total_hi + tol) {
        res.status = SelectionStatus::infeasible;
        return res;
    }
    std::vector<std::size_t> free_states;
    for (std::size_t i = 0; i < n; ++i) {
        double width = res.per_state[i].hi - res.per_state[i].lo;
        if (width > 1e-9 * (1.0 + std::abs(res.per_state[i].hi))) free_states.push_back(i);
    }
    res.payoff.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.payoff[i] = res.per_state[i].lo;
    if (free_states.size() <= 1) {
        if (free_states.size() == 1) {
            std::size_t i = free_states[0];
            double rest = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) rest += qw[j] * res.payoff[j];
            }
            double wi = (x - rest) / qw[i];
            wi = std::clamp(wi, res.per_state[i].lo, res.per_state[i].hi);
            res.payoff[i] = wi;
        }
        res.status = SelectionStatus::unique;
        return res;
    }
    // Several states sit on kinks: the feasible set is a nontrivial polytope.
    // Report the per-state ranges cut down by the budget hyperplane.
    res.status = SelectionStatus::non_unique;
    for (std::size_t i = 0; i < n; ++i) {
        double rest_hi = total_hi - qw[i] * res.per_state[i].hi;
        double rest_lo = total_lo - qw[i] * res.per_state[i].lo;
        double lo = std::max(res.per_state[i].lo, (x - rest_hi) / qw[i]);
        double hi = std::min(res.per_state[i].hi, (x - rest_lo) / qw[i]);
        res.per_state[i] = {lo, hi};
        res.payoff[i] = lo;
    }
    // Still produce one feasible selection by water-filling the budget.
    double have = 0.0;
    for (std::size_t i = 0; i < n; ++i) have += qw[i] * res.payoff[i];
    for (std::size_t i = 0; i < n && have < x; ++i) {
        double room = (res.per_state[i].hi - res.payoff[i]) * qw[i];
        double add = std::min(room, x - have);
        res.payoff[i] += add / qw[i];
        have += add;
    }
    return res;
}

FiniteMarket lognormal_discretization(double mu, double sigma, double T, std::size_t n_states) {
    if (n_states < 2) throw DomainError("lognormal_discretization: need at least two states");
    std::vector<MarketState> states;
    states.reserve(n_states);
    double p = 1.0 / static_cast<double>(n_states);
    double drift = (mu - 0.5 * sigma * sigma) * T;
    double vol = sigma * std::sqrt(T);
    for (std::size_t i = 0; i < n_states; ++i) {
        // Conditional median of each equal-probability slice.
        double u = (static_cast<double>(i) + 0.5) * p;
        states.push_back({p, std::exp(drift + vol * norm_quantile(u))});
    }
    return FiniteMarket(std::move(states));
}

}  // namespace fundopt::discrete
