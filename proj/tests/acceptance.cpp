// Acceptance suite: every criterion prints one PASS/FAIL line with its
// measured numbers and wall time; the process exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fundopt/bs.hpp"
#include "fundopt/cli.hpp"
#include "fundopt/discrete.hpp"
#include "fundopt/math.hpp"
#include "fundopt/mc.hpp"
#include "fundopt/models.hpp"
#include "fundopt/utility.hpp"

using namespace fundopt;

namespace {

const double kSqrt3 = 1.7320508075688772935;
const bs::Market kMarket{0.1, 0.2, 1.0};
const bs::CallParams kParams{0.5, 0.25, 3.0};

int failures = 0;

struct Outcome {
    bool pass;
    std::string details;
};

void criterion(int id, const std::string& name, double time_limit_s,
               const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = secs <= time_limit_s;
    bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] criterion %2d: %s — %s (%.2fs, limit %.0fs)\n", pass ? "PASS" : "FAIL",
                id, name.c_str(), out.details.c_str(), secs, time_limit_s);
    std::fflush(stdout);
}

PiecewiseUtility paper_pu() {
    return concavify_closed_form(UtilityFunction::power(0.5),
                                 IncentiveScheme::call_option(0.25, 3.0));
}

std::string fmt1(const char* f, double a) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

}  // namespace

int main() {
    const std::size_t big_n = 1000000;
    const int threads = 0;  // hardware default

    criterion(1, "closed-form concavification", 1.0, [&] {
        auto t0 = std::chrono::steady_clock::now();
        auto pu = paper_pu();
        double micros =
            std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0)
                .count();
        const auto& seg = pu.segments()[0];
        double err_x = std::abs(seg.a_plus - 6.0);
        double err_y = std::abs(seg.gamma - kSqrt3 / 6.0);
        bool pass = err_x <= 1e-12 && err_y <= 1e-12 && micros < 1000.0;
        std::ostringstream os;
        os << "x* err=" << err_x << " y* err=" << err_y << " build=" << micros << "us (<1ms)";
        return Outcome{pass, os.str()};
    });

    criterion(2, "numerical envelope agreement", 1.0, [&] {
        auto env = concavify_numeric(
            compose(UtilityFunction::power(0.5), IncentiveScheme::call_option(0.25, 3.0)),
            {0.0, 30.0, 2048});
        if (env.segments().size() != 1) return Outcome{false, "segment count"};
        const auto& seg = env.segments()[0];
        double err = std::max({std::abs(seg.a_minus), std::abs(seg.a_plus - 6.0),
                               std::abs(seg.gamma - kSqrt3 / 6.0)});
        return Outcome{err <= 1e-8, fmt1("max endpoint/slope err=%.2e (tol 1e-8)", err)};
    });

    criterion(3, "conjugacy roundtrip", 1.0, [&] {
        double gap_cf = conjugate_roundtrip_check(conjugate(paper_pu()), {0.1, 30.0, 256});
        auto tk = concavify_numeric(
            compose(UtilityFunction::power(0.5),
                    IncentiveScheme::from_pieces(
                        {{0.0, 0.0, 0.0}, {1.0, 0.3, 0.0}, {5.0, 0.7, 1.2}})),
            {0.0, 20.0, 2048});
        double gap_tk = conjugate_roundtrip_check(conjugate(tk), {0.1, 20.0, 256});
        bool pass = gap_cf <= 1e-8 && gap_tk <= 1e-4;
        std::ostringstream os;
        os << "closed-form gap=" << gap_cf << " (tol 1e-8), two-kink gap=" << gap_tk
           << " (tol 1e-4)";
        return Outcome{pass, os.str()};
    });

    criterion(4, "dual value vs Monte Carlo", 30.0, [&] {
        bs::Solver s(kMarket, kParams);
        auto du = conjugate(paper_pu());
        double theta = kMarket.theta(), T = kMarket.T;
        mc::RngPlan plan{777u};
        bool pass = true;
        std::ostringstream os;
        for (double y : {0.05, 0.1, 0.2, 0.25}) {
            auto vals = mc::per_path(big_n, threads, plan, [&](std::size_t, mc::PathRng& rng) {
                double w = std::sqrt(T) * rng.next_normal();
                return du.value(y * std::exp(-theta * w - 0.5 * theta * theta * T));
            });
            auto est = mc::estimate(vals, "v_mc", 777);
            double z = (s.dual_value(y) - est.mean) / est.se;
            pass = pass && std::abs(z) <= 3.0;
            os << "y=" << y << " z=" << fmt1("%+.2f ", z);
        }
        return Outcome{pass, os.str() + "(3 SE @ 1e6 paths)"};
    });

    criterion(5, "martingale budget", 30.0, [&] {
        bs::Solver s(kMarket, kParams);
        double theta = kMarket.theta();
        mc::RngPlan plan{555u};
        bool pass = true;
        std::ostringstream os;
        for (double x : {1.0, 5.0, 10.0}) {
            auto payoff = s.payoff(x);
            auto vals = mc::per_path(big_n, threads, plan, [&](std::size_t, mc::PathRng& rng) {
                double wq = std::sqrt(kMarket.T) * rng.next_normal();
                return payoff(wq - theta * kMarket.T);
            });
            auto est = mc::estimate(vals, "EQ_X", 555);
            double z = (est.mean - x) / est.se;
            pass = pass && std::abs(z) <= 3.0;
            os << "x=" << x << " z=" << fmt1("%+.2f ", z);
        }
        return Outcome{pass, os.str() + "(3 SE @ 1e6 paths)"};
    });

    criterion(6, "zero duality gap and atom avoidance", 60.0, [&] {
        bs::Solver s(kMarket, kParams);
        auto pu = paper_pu();
        auto payoff = s.payoff(1.0);
        mc::RngPlan plan{31337u};
        std::vector<double> in_gap(big_n, 0.0);
        auto vals = mc::per_path(big_n, threads, plan, [&](std::size_t i, mc::PathRng& rng) {
            double w = std::sqrt(kMarket.T) * rng.next_normal();
            double xt = payoff(w);
            if (xt > 0.0 && xt < 6.0 * (1.0 - 1e-12)) in_gap[i] = 1.0;
            return pu.value(xt);
        });
        std::size_t bad = static_cast<std::size_t>(pairwise_sum(in_gap));
        auto est = mc::estimate(vals, "EU", 31337);
        double w_ref = s.primal_value(1.0).w;
        double z = (est.mean - w_ref) / est.se;
        bool pass = std::abs(z) <= 3.0 && bad == 0;
        std::ostringstream os;
        os << "E[U(X_T)]=" << est.mean << "+-" << est.se << " vs w=" << w_ref << " z="
           << fmt1("%+.2f", z) << ", samples in (0,x*): " << bad;
        return Outcome{pass, os.str()};
    });

    criterion(7, "hedging replication order", 120.0, [&] {
        bs::Solver s(kMarket, kParams);
        // Wealth with a small ruin atom (0.3%): the payoff discontinuity at
        // the threshold stays subdominant over the tested step window, so
        // the smooth-branch 1/2 rate is measurable.
        double x = 50.0;
        auto payoff = s.payoff(x);
        auto hedger = s.hedger(x);
        std::vector<double> log_rms, log_dt;
        std::ostringstream os;
        for (std::size_t steps : {1024u, 4096u, 16384u}) {
            auto strat = [&](double t, double, double spot) {
                double w =
                    (std::log(spot) - (kMarket.mu - 0.5 * kMarket.sigma * kMarket.sigma) * t) /
                    kMarket.sigma;
                return hedger(t, w);
            };
            auto st = mc::replay_gbm(kMarket.mu, kMarket.sigma, kMarket.T, 10000, steps, 4242,
                                     threads, strat, x, [&](double w) { return payoff(w); });
            log_rms.push_back(std::log(st.rms_target_error));
            log_dt.push_back(std::log(kMarket.T / static_cast<double>(steps)));
            os << "rms(" << steps << ")=" << fmt1("%.4f ", st.rms_target_error);
        }
        double mx = (log_dt[0] + log_dt[1] + log_dt[2]) / 3.0;
        double my = (log_rms[0] + log_rms[1] + log_rms[2]) / 3.0;
        double num = 0.0, den = 0.0;
        for (int i = 0; i < 3; ++i) {
            num += (log_dt[i] - mx) * (log_rms[i] - my);
            den += (log_dt[i] - mx) * (log_dt[i] - mx);
        }
        double order = num / den;
        os << "order=" << fmt1("%.3f", order) << " (>=0.4), x=50 ruin="
           << fmt1("%.4f", s.ruin_probability(x));
        return Outcome{order >= 0.4, os.str()};
    });

    criterion(8, "relative risk aversion consistency", 30.0, [&] {
        bs::Solver s(kMarket, kParams);
        double worst_fd = 0.0;
        for (double y : logspace(0.02, 0.27, 20)) {
            double h = 1e-5 * y;
            double fd1 = (s.dual_value(y + h) - s.dual_value(y - h)) / (2 * h);
            double fd2 =
                (s.dual_value(y + h) - 2 * s.dual_value(y) + s.dual_value(y - h)) / (h * h);
            worst_fd = std::max(worst_fd, std::abs(s.rra_dual(y) - (-y * fd2 / fd1)));
        }
        double worst_inv = 0.0;
        double ref = 0.0;
        bool first = true;
        for (double alpha : {0.5, 1.0, 2.0}) {
            auto [ka, la] = bs::scale_family(0.5, 3.0, 0.25, alpha);
            bs::Solver sa(kMarket, {0.5, la, ka});
            double r = sa.rra_dual(0.15);
            if (first) {
                ref = r;
                first = false;
            } else {
                worst_inv = std::max(worst_inv, std::abs(r - ref));
            }
        }
        bool pass = worst_fd <= 1e-4 && worst_inv <= 1e-8;
        std::ostringstream os;
        os << "max |closed - FD|=" << worst_fd << " (tol 1e-4), scale-invariance dev="
           << worst_inv << " (tol 1e-8)";
        return Outcome{pass, os.str()};
    });

    criterion(9, "incentive scaling identities", 60.0, [&] {
        double p = 0.5, kappa = 3.0, l = 0.25;
        bs::Solver base(kMarket, {p, l, kappa});
        double v_dev = 0.0, w_dev = 0.0, ys_dev = 0.0;
        double ys_ref = bs::CallParams{p, l, kappa}.y_star();
        for (double alpha : {0.5, 2.0}) {
            auto [ka, la] = bs::scale_family(p, kappa, l, alpha);
            ys_dev = std::max(ys_dev, std::abs(bs::CallParams{p, la, ka}.y_star() - ys_ref));
            bs::Solver sa(kMarket, {p, la, ka});
            for (double y : logspace(0.03, 0.25, 21)) {
                v_dev = std::max(v_dev, std::abs(sa.dual_value(y) - alpha * base.dual_value(y)));
            }
            for (double x : linspace(0.5, 4.0, 8)) {
                w_dev = std::max(w_dev, std::abs(sa.primal_value(x).w -
                                                 alpha * base.primal_value(x / alpha).w));
            }
        }
        auto sc = bs::optimal_scaling(kMarket, p, kappa, l, 1.0);
        std::ostringstream os;
        os << "y* dev=" << ys_dev << " v dev=" << v_dev << " (1e-8) w dev=" << w_dev
           << " (1e-6)";
        bool pass = ys_dev <= 1e-12 && v_dev <= 1e-8 && w_dev <= 1e-6;
        auto family_value = [&](double a) { return a * base.primal_value(1.0 / a).w; };
        if (sc.alpha) {
            double a = *sc.alpha, h = 1e-4 * a;
            double grad = (family_value(a + h) - family_value(a - h)) / (2 * h);
            pass = pass && std::abs(grad) <= 1e-5;
            os << ", alpha=" << *sc.alpha << " |d/dalpha|=" << std::abs(grad) << " (1e-5)";
        } else {
            // No stationary scale exists for this family: certify the reason
            // (elasticity < 1 on the scan, value strictly rising in alpha),
            // which makes the stationarity clause vacuously satisfied.
            bool below = true;
            for (double c : logspace(sc.scan_lo, sc.scan_hi, 9)) {
                auto pr = base.primal_value(c);
                below = below && c * pr.y / pr.w < 1.0;
            }
            bool rising = true;
            for (double a : {0.5, 2.0, 8.0}) {
                double h = 1e-4 * a;
                rising = rising && (family_value(a + h) - family_value(a - h)) > 0.0;
            }
            pass = pass && below && rising;
            os << ", alpha=none (elasticity<1 on scan: " << (below ? "yes" : "no")
               << ", value rising in alpha: " << (rising ? "yes" : "no") << ")";
        }
        return Outcome{pass, os.str()};
    });

    criterion(10, "driftless construction", 60.0, [&] {
        auto pu = paper_pu();
        auto res =
            bs::driftless_simulate(1.0, 6.0, 0.2, 1.0, big_n, 2000, 42u, pu, 40.0, threads);
        double hit_z = (res.hit_prob.mean - 1.0 / 6.0) / res.hit_prob.se;
        double util_z = (res.utility_u.mean - kSqrt3 / 6.0) / res.utility_u.se;
        bool beats_hold = res.utility_u.mean > pu.value(1.0);  // buy-and-hold gives 0
        bool pass = std::abs(hit_z) <= 3.0 && std::abs(util_z) <= 3.0 && beats_hold;
        std::ostringstream os;
        os << "hit=" << res.hit_prob.mean << " z=" << fmt1("%+.2f", hit_z)
           << ", E[U]=" << res.utility_u.mean << " z=" << fmt1("%+.2f", util_z)
           << ", buy-and-hold=" << pu.value(1.0);
        return Outcome{pass, os.str()};
    });

    criterion(11, "discrete counterexample reproduction", 1.0, [&] {
        auto pu = paper_pu();
        auto du = conjugate(pu);
        discrete::FiniteMarket mkt({{0.5, 2.0}, {0.5, 0.5}});
        auto gap = discrete::biduality_gap(mkt, pu, 1.0);
        auto mg = discrete::marginal_value(mkt, du, 1.0);
        auto atoms = discrete::atom_report(mkt, du, mg.y);
        auto sel = discrete::subdifferential_selection(mkt, du, 1.0);
        bool pass = gap.u == 0.0 && std::abs(gap.w - kSqrt3 / 4.0) <= 1e-10 &&
                    sel.status == discrete::SelectionStatus::unique &&
                    std::abs(sel.payoff[0] - 3.0) <= 1e-8 && std::abs(sel.payoff[1]) <= 1e-12 &&
                    atoms.delta.size() == 2 &&
                    std::abs(atoms.delta[0].value - kSqrt3 / 6.0) <= 1e-10 &&
                    std::abs(atoms.delta[1].value - kSqrt3 / 3.0) <= 1e-10 &&
                    !atoms.condition_holds;
        std::ostringstream os;
        os << "u=" << gap.u << " w=" << gap.w << " payoff=(" << sel.payoff[0] << ","
           << sel.payoff[1] << ") atoms={" << atoms.delta[0].value << ","
           << atoms.delta[1].value << "} intersection "
           << (atoms.condition_holds ? "empty" : "nonempty");
        return Outcome{pass, os.str()};
    });

    criterion(12, "atom diagnostics", 60.0, [&] {
        // Degenerate control: zero market price of risk.
        models::SvSpec zero;
        zero.variant = models::SvVariant::hull_white;
        zero.f = models::ExcessRate::none();
        zero.T = 1.0;
        auto d0 = models::atom_diagnostic(
            models::sample_sv_density(zero, 10000, 64, 1u, threads).sample);
        bool atom_ok = d0.atom_detected && d0.atom_value == 1.0 && d0.atom_mass == 1.0;

        // Three-component lognormal mixture at 1e5 samples.
        models::MixtureSpec mix;
        mix.probs = {0.5, 0.3, 0.2};
        mix.thetas = {models::ThetaFn::constant(0.2),
                      models::ThetaFn::step({{0.0, 0.2}, {0.5, 0.5}}),
                      models::ThetaFn::step({{0.0, 0.2}, {0.5, 0.35}, {0.8, 0.1}})};
        mix.T = 1.0;
        auto dm = models::atom_diagnostic(
            models::sample_mixture_density(mix, mix.probs, 100000, 6u, threads));
        bool mix_ok = !dm.atom_detected && dm.max_cdf_jump <= 1e-4;

        // Constant-rate Euler sample against the closed-form lognormal CDF.
        models::SvSpec cst;
        cst.variant = models::SvVariant::hull_white;
        cst.f = models::ExcessRate::constant(0.5);
        cst.T = 1.0;
        auto sv = models::sample_sv_density(cst, 100000, 4096, 17u, threads);
        std::vector<double> z = sv.sample.z;
        std::sort(z.begin(), z.end());
        double n = static_cast<double>(z.size());
        double ks = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            double f = norm_cdf((std::log(z[i]) + 0.125) / 0.5);
            ks = std::max(ks, std::max(f - static_cast<double>(i) / n,
                                       static_cast<double>(i + 1) / n - f));
        }
        double crit = 1.358 / std::sqrt(n);  // 95% one-sample KS
        bool ks_ok = ks < crit;
        std::ostringstream os;
        os << "atom_at(1,1): " << (atom_ok ? "yes" : "no") << ", mixture jump="
           << dm.max_cdf_jump << " (<=1e-4), KS=" << ks << " crit=" << crit;
        return Outcome{atom_ok && mix_ok && ks_ok, os.str()};
    });

    criterion(13, "bit-exact reproducibility across thread counts", 120.0, [&] {
        auto pu = paper_pu();
        bool pass = true;
        std::ostringstream os;
        // library level: driftless estimate and a dual-value MC
        std::vector<double> hits, duals;
        for (int th : {1, 4, 8}) {
            auto res =
                bs::driftless_simulate(1.0, 6.0, 0.2, 1.0, 200000, 1000, 42u, pu, 40.0, th);
            hits.push_back(res.hit_prob.mean);
            models::SvSpec spec;
            spec.variant = models::SvVariant::heston;
            spec.kappa = 1.5;
            spec.mean = 0.04;
            spec.xi = 0.2;
            spec.f = models::ExcessRate::tanh_shaped(0.3, 1.0);
            spec.T = 1.0;
            auto dv = models::dual_value_mc_sv(spec, conjugate(pu), 0.1, 50000, 128, 7u, th);
            duals.push_back(dv.estimate.mean);
        }
        pass = pass && hits[0] == hits[1] && hits[0] == hits[2];
        pass = pass && duals[0] == duals[1] && duals[0] == duals[2];
        // command level: full report bytes must agree
        std::vector<std::string> reports;
        for (int th : {1, 4, 8}) {
            std::ostringstream out, err;
            int code = cli::run({"driftless-sim", "--preset", "paper-example", "--paths",
                                 "50000", "--steps", "500", "--seed", "4242", "--threads",
                                 std::to_string(th), "--out",
                                 "/tmp/fundopt_accept_rep" + std::to_string(th)},
                                out, err);
            pass = pass && code == 0;
            reports.push_back(out.str());
        }
        pass = pass && reports[0] == reports[1] && reports[0] == reports[2];
        os << "hit means equal: " << (hits[0] == hits[2] ? "yes" : "no")
           << ", dual means equal: " << (duals[0] == duals[2] ? "yes" : "no")
           << ", CLI reports byte-identical: " << (reports[0] == reports[2] ? "yes" : "no");
        return Outcome{pass, os.str()};
    });

    std::printf("%s: %d of 13 criteria passed\n", failures == 0 ? "SUCCESS" : "FAILURE",
                13 - failures);
    return failures == 0 ? 0 : 1;
}
