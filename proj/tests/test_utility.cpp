#include <doctest.h>

#include <cmath>
#include <vector>

#include "fundopt/utility.hpp"

using namespace fundopt;

namespace {

const double kSqrt3 = 1.7320508075688772935;

PiecewiseUtility paper_case_closed() {
    return concavify_closed_form(UtilityFunction::power(0.5),
                                 IncentiveScheme::call_option(0.25, 3.0));
}

IncentiveScheme two_kink_scheme() {
    // g = 0.3 (x-1)^+ + 0.4 (x-5)^+
    return IncentiveScheme::from_pieces({{0.0, 0.0, 0.0}, {1.0, 0.3, 0.0}, {5.0, 0.7, 1.2}});
}

// Hand-derived envelope of the two-kink case, used as a frozen oracle:
// anchored segment [0, 2] with slope sqrt(0.3); interior tangent segment
// [19/7, 51/7] with slope 0.3 sqrt(35/18).
const double kTk1Hi = 2.0;
const double kTk1Gamma = 0.54772255750516611;
const double kTk2Lo = 19.0 / 7.0;
const double kTk2Hi = 51.0 / 7.0;
const double kTk2Gamma = 0.41833001326703778;

}  // namespace

TEST_CASE("utility functions: values, marginals, Inada spot checks") {
    auto u = UtilityFunction::power(0.5);
    CHECK(u.value(4.0) == doctest::Approx(4.0).epsilon(1e-14));  // x^p/p = 2 sqrt(x)
    CHECK(u.value_at_zero() == 0.0);
    auto lg = UtilityFunction::log_utility();
    CHECK(lg.value(std::exp(1.0)) == doctest::Approx(1.0));
    CHECK(lg.value_at_zero() == -kInf);

    for (auto* uf : {&u, &lg}) {
        double prev_d = kInf;
        for (double x : logspace(1e-6, 1e6, 41)) {
            double d = uf->deriv(x);
            CHECK(d > 0.0);
            CHECK(d < prev_d);
            prev_d = d;
            CHECK(uf->inverse_marginal(d) == doctest::Approx(x).epsilon(1e-9));
        }
        CHECK(uf->deriv(1e-9) > 1e3);  // Inada at zero
        CHECK(uf->deriv(1e9) < 1e-3);  // Inada at infinity
    }
}

TEST_CASE("incentive scheme validation") {
    CHECK_THROWS_AS(IncentiveScheme::call_option(1.2, 3.0), SlopeViolation);
    CHECK_THROWS_AS(IncentiveScheme::from_pieces({{0.0, 0.5, 0.0}, {2.0, 1.5, 1.0}}),
                    SlopeViolation);
    // decreasing slope = nonconvex
    CHECK_THROWS_AS(IncentiveScheme::from_pieces({{0.0, 0.8, 0.0}, {2.0, 0.2, 1.6}}),
                    DomainError);
    // discontinuity at breakpoint
    CHECK_THROWS_AS(IncentiveScheme::from_pieces({{0.0, 0.5, 0.0}, {2.0, 0.6, 3.0}}),
                    DomainError);
    // constant scheme
    CHECK_THROWS_AS(IncentiveScheme::from_pieces({{0.0, 0.0, 1.0}}), DomainError);

    auto g = IncentiveScheme::call_option(0.25, 3.0);
    CHECK(g(2.0) == 0.0);
    CHECK(g(7.0) == doctest::Approx(1.0));
    CHECK(g.zero_set_sup() == 3.0);
    CHECK(IncentiveScheme::identity()(4.2) == doctest::Approx(4.2));
}

TEST_CASE("compose: worked values and the domain edge") {
    auto pu = compose(UtilityFunction::power(0.5), IncentiveScheme::call_option(0.25, 3.0));
    // U(g(7)) = 2 sqrt(1) = 2, which is sqrt(7-3) in the composed form
    CHECK(pu.value(7.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(pu.value(7.0) == doctest::Approx(std::sqrt(7.0 - 3.0)).epsilon(1e-14));
    CHECK(pu.value(2.0) == 0.0);
    CHECK(pu.beta() == 0.0);

    auto ident = compose(UtilityFunction::power(0.5), IncentiveScheme::identity());
    for (double x : {0.5, 1.0, 7.0}) {
        CHECK(ident.value(x) == doctest::Approx(UtilityFunction::power(0.5).value(x)));
    }
    CHECK(ident.beta() == 0.0);

    auto logcall = compose(UtilityFunction::log_utility(), IncentiveScheme::call_option(1.0, 1.0));
    CHECK(logcall.value(0.5) == -kInf);
    CHECK(logcall.value(1.0) == -kInf);
    CHECK(logcall.beta() == 1.0);
    CHECK(logcall.value(3.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("closed-form envelope: tangency point and slope") {
    auto pu = paper_case_closed();
    REQUIRE(pu.segments().size() == 1);
    const auto& seg = pu.segments()[0];
    CHECK(seg.a_minus == 0.0);
    CHECK(std::abs(seg.a_plus - 6.0) <= 1e-12);
    CHECK(std::abs(seg.gamma - kSqrt3 / 6.0) <= 1e-12);
    CHECK(pu.envelope(2.0) == doctest::Approx(kSqrt3 / 3.0).epsilon(1e-14));
    CHECK(pu.envelope(7.0) == doctest::Approx(2.0));

    // k -> 0 leaves no kink
    auto flat = concavify_closed_form(UtilityFunction::power(0.5),
                                      IncentiveScheme::call_option(1.0, 0.0));
    CHECK(flat.segments().empty());
}

TEST_CASE("numeric envelope agrees with the closed form") {
    auto pu = compose(UtilityFunction::power(0.5), IncentiveScheme::call_option(0.25, 3.0));
    auto env = concavify_numeric(pu, {0.0, 20.0, 2048});
    REQUIRE(env.segments().size() == 1);
    const auto& seg = env.segments()[0];
    CHECK(std::abs(seg.a_minus - 0.0) <= 1e-8);
    CHECK(std::abs(seg.a_plus - 6.0) <= 1e-8);
    CHECK(std::abs(seg.gamma - kSqrt3 / 6.0) <= 1e-8);
}

TEST_CASE("numeric envelope: already-concave input has no segments") {
    auto lg = concavify_numeric(
        compose(UtilityFunction::log_utility(), IncentiveScheme::identity()), {0.0, 20.0, 512});
    CHECK(lg.segments().empty());
    auto pw = concavify_numeric(
        compose(UtilityFunction::power(0.5), IncentiveScheme::identity()), {0.0, 20.0, 512});
    CHECK(pw.segments().empty());
    // log composed with a call is concave on its domain as well
    auto lc = concavify_numeric(
        compose(UtilityFunction::log_utility(), IncentiveScheme::call_option(1.0, 1.0)),
        {0.0, 20.0, 512});
    CHECK(lc.segments().empty());
    CHECK(lc.beta() == 1.0);
}

TEST_CASE("numeric envelope: two-kink scheme matches the derived tangents") {
    auto pu = compose(UtilityFunction::power(0.5), two_kink_scheme());
    auto env = concavify_numeric(pu, {0.0, 20.0, 2048});
    REQUIRE(env.segments().size() == 2);
    CHECK(std::abs(env.segments()[0].a_minus - 0.0) <= 1e-8);
    CHECK(std::abs(env.segments()[0].a_plus - kTk1Hi) <= 1e-7);
    CHECK(std::abs(env.segments()[0].gamma - kTk1Gamma) <= 1e-8);
    CHECK(std::abs(env.segments()[1].a_minus - kTk2Lo) <= 1e-7);
    CHECK(std::abs(env.segments()[1].a_plus - kTk2Hi) <= 1e-7);
    CHECK(std::abs(env.segments()[1].gamma - kTk2Gamma) <= 1e-8);

    // Dominance on the grid, strict inside segments.
    for (double x : make_grid({0.0, 20.0, 2048}, env)) {
        double v = env.value(x);
        double e = env.envelope(x);
        CHECK(e >= v - 1e-12);
        if ((x > 0.1 && x < kTk1Hi - 0.1) || (x > kTk2Lo + 0.1 && x < kTk2Hi - 0.1)) {
            CHECK(e > v + 1e-6);
        }
    }
}

TEST_CASE("numeric envelope matches a brute-force chord maximum on a finer grid") {
    auto pu = compose(UtilityFunction::power(0.5), two_kink_scheme());
    auto env = concavify_numeric(pu, {0.0, 20.0, 1024});

    // Test-only oracle: the envelope at x is the best chord over sample pairs
    // straddling x, scanned on a 10x finer grid.
    std::vector<double> xs = linspace(0.0, 20.0, 10241);
    std::vector<double> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = pu.value(xs[i]);
    auto hull_value = [&](double x) {
        double best = pu.value(x);
        for (std::size_t i = 0; i < xs.size(); i += 4) {
            if (xs[i] >= x) break;
            for (std::size_t j = xs.size() - 1; j > i && xs[j] > x; j -= 4) {
                double chord = ys[i] + (ys[j] - ys[i]) * (x - xs[i]) / (xs[j] - xs[i]);
                best = std::max(best, chord);
                if (j < 4) break;
            }
        }
        return best;
    };
    for (double x : linspace(0.05, 19.5, 13)) {
        CHECK(env.envelope(x) >= pu.value(x) - 1e-12);
        CHECK(std::abs(env.envelope(x) - hull_value(x)) <= 1e-6);
    }
}

TEST_CASE("numeric envelope rejects an all-infinite grid and tiny grids") {
    auto pu = compose(UtilityFunction::log_utility(), IncentiveScheme::call_option(1.0, 50.0));
    CHECK_THROWS_AS(concavify_numeric(pu, {0.0, 10.0, 128}), DomainError);
    CHECK_THROWS_AS(concavify_numeric(pu, {0.0, 100.0, 32}), InvalidRange);
}

TEST_CASE("envelope regularity: concavity, slope monotonicity, C1 gluing") {
    for (int which : {0, 1}) {
        PiecewiseUtility env =
            which == 0 ? paper_case_closed()
                       : concavify_numeric(
                             compose(UtilityFunction::power(0.5), two_kink_scheme()),
                             {0.0, 20.0, 2048});
        auto xs = linspace(0.05, 18.0, 181);
        for (std::size_t i = 0; i + 2 < xs.size(); i += 3) {
            double a = xs[i], b = xs[i + 2];
            CHECK(env.envelope(0.5 * (a + b)) >=
                  0.5 * (env.envelope(a) + env.envelope(b)) - 1e-10);
        }
        auto gammas = env.gamma_set();
        for (std::size_t i = 0; i + 1 < gammas.size(); ++i) CHECK(gammas[i] > gammas[i + 1]);
        // C1 at segment endpoints (one-sided finite differences, h = 1e-5).
        // The quotient on the curved side carries a |f''| h / 2 truncation
        // term, so allow for the local curvature on top of the 1e-6 budget.
        const double h = 1e-5;
        for (const auto& seg : env.segments()) {
            for (double edge : {seg.a_minus, seg.a_plus}) {
                if (edge <= h) continue;
                double left = (env.envelope(edge) - env.envelope(edge - h)) / h;
                double right = (env.envelope(edge + h) - env.envelope(edge)) / h;
                double d2 = std::abs(env.envelope(edge + 2.0 * h) - 2.0 * env.envelope(edge + h) +
                                     env.envelope(edge)) /
                            (h * h);
                CHECK(std::abs(left - right) <= 1e-6 * std::max(1.0, std::abs(left)) + 0.6 * d2 * h);
            }
        }
    }
}

TEST_CASE("conjugate: closed-form branch values and kink subdifferential") {
    auto du = conjugate(paper_case_closed());
    CHECK(du.value(0.1) == doctest::Approx(2.2).epsilon(1e-12));
    CHECK(du.value(1.0) == 0.0);
    CHECK(du.value(kSqrt3 / 6.0 + 1e-9) == doctest::Approx(0.0).epsilon(1e-6));
    auto iv = du.neg_subdifferential(kSqrt3 / 6.0);
    CHECK(iv.lo == doctest::Approx(0.0));
    CHECK(iv.hi == doctest::Approx(6.0));
    CHECK(du.kinks().size() == 1);
    CHECK(du.y_flat() == doctest::Approx(kSqrt3 / 6.0));

    // off-kink: singleton matching the marginal map
    for (double y : {0.05, 0.1, 0.2}) {
        auto s = du.neg_subdifferential(y);
        CHECK(s.lo == doctest::Approx(s.hi));
        CHECK(s.lo == doctest::Approx(1.0 / (4.0 * y * y) + 3.0).epsilon(1e-9));
        CHECK(du.primal().envelope_deriv(s.lo) == doctest::Approx(y).epsilon(1e-9));
    }
    CHECK(du.neg_subdifferential(0.9).lo == doctest::Approx(0.0));
}

TEST_CASE("conjugate of a log composition stays on its single branch") {
    // log utility with a unit call: the conjugate is -log y - y - 1 for all
    // y > 0 (the domain edge removes the flat branch entirely).
    auto pu = concavify_numeric(
        compose(UtilityFunction::log_utility(), IncentiveScheme::call_option(1.0, 1.0)),
        {0.0, 50.0, 512});
    auto du = conjugate(pu);
    for (double y : logspace(0.01, 5.0, 41)) {
        CHECK(du.value(y) == doctest::Approx(-std::log(y) - y - 1.0).epsilon(1e-10));
    }
    CHECK(du.y_flat() == kInf);
    auto iv = du.neg_subdifferential(0.5);
    CHECK(iv.lo == doctest::Approx(iv.hi));
    CHECK(iv.lo == doctest::Approx(1.0 + 2.0).epsilon(1e-9));  // x = 1 + 1/y
}

TEST_CASE("conjugate: generic piecewise sup equals the closed form") {
    auto pu_num = concavify_numeric(
        compose(UtilityFunction::power(0.5), IncentiveScheme::call_option(0.25, 3.0)),
        {0.0, 30.0, 2048});
    auto du_num = conjugate(pu_num);  // numeric path (segments from the hull)
    auto du_cf = conjugate(paper_case_closed());
    for (double y : logspace(1e-3, 2.0, 101)) {
        CHECK(du_num.value(y) == doctest::Approx(du_cf.value(y)).epsilon(1e-9));
    }
}

TEST_CASE("conjugate is convex and nonincreasing; strictly convex below y_flat") {
    auto du = conjugate(paper_case_closed());
    auto ys = logspace(1e-3, 1.0, 201);
    for (std::size_t i = 0; i + 2 < ys.size(); ++i) {
        double a = ys[i], b = ys[i + 2], m = 0.5 * (a + b);
        double lhs = du.value(m);
        double rhs = 0.5 * (du.value(a) + du.value(b));
        CHECK(lhs <= rhs + 1e-12);
        if (b < du.y_flat() * 0.98) {
            CHECK(lhs < rhs - 1e-14);  // strict below the flat threshold
        }
        CHECK(du.value(a) >= du.value(b) - 1e-12);
    }
}

TEST_CASE("conjugate roundtrip: biconjugate returns the envelope") {
    auto du_cf = conjugate(paper_case_closed());
    CHECK(conjugate_roundtrip_check(du_cf, {0.1, 30.0, 512}) <= 1e-8);

    auto ident = concavify_numeric(
        compose(UtilityFunction::power(0.5), IncentiveScheme::identity()), {0.0, 30.0, 512});
    CHECK(conjugate_roundtrip_check(conjugate(ident), {0.1, 30.0, 256}) <= 1e-8);

    auto tk = concavify_numeric(compose(UtilityFunction::power(0.5), two_kink_scheme()),
                                {0.0, 20.0, 2048});
    CHECK(conjugate_roundtrip_check(conjugate(tk), {0.1, 20.0, 512}) <= 1e-4);
}

TEST_CASE("Fenchel-Young inequality with equality on the subdifferential") {
    auto pu = paper_case_closed();
    auto du = conjugate(pu);
    for (double y : logspace(0.02, 0.5, 21)) {
        for (double x : linspace(0.1, 25.0, 21)) {
            CHECK(pu.envelope(x) <= du.value(y) + x * y + 1e-10);
        }
        auto iv = du.neg_subdifferential(y);
        double x_eq = 0.5 * (iv.lo + iv.hi);
        CHECK(pu.envelope(x_eq) == doctest::Approx(du.value(y) + x_eq * y).epsilon(1e-9));
    }
}

TEST_CASE("slope bound: envelope derivative below the raw marginal") {
    auto rep = slope_bound_check(paper_case_closed(), {0.0, 30.0, 512});
    CHECK(rep.ok);
    // explicit spot check at x = 10
    auto pu = paper_case_closed();
    CHECK(pu.envelope_deriv(10.0) <=
          UtilityFunction::power(0.5).deriv(IncentiveScheme::call_option(0.25, 3.0)(10.0)));

    auto ident = concavify_numeric(
        compose(UtilityFunction::power(0.5), IncentiveScheme::identity()), {0.0, 30.0, 256});
    auto rep2 = slope_bound_check(ident, {0.0, 30.0, 256});
    CHECK(rep2.ok);  // equality everywhere for the identity scheme

    auto rep3 = slope_bound_check(paper_case_closed(), {5.0, 5.0, 1});
    CHECK(rep3.ok);  // degenerate one-point grid holds trivially
}

TEST_CASE("two-kink conjugate kinks expose both segment intervals") {
    auto tk = concavify_numeric(compose(UtilityFunction::power(0.5), two_kink_scheme()),
                                {0.0, 20.0, 2048});
    auto du = conjugate(tk);
    auto k = du.kinks();
    REQUIRE(k.size() == 2);
    auto iv1 = du.neg_subdifferential(k[0]);
    auto iv2 = du.neg_subdifferential(k[1]);
    CHECK(iv1.lo == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(iv1.hi == doctest::Approx(kTk1Hi).epsilon(1e-6));
    CHECK(iv2.lo == doctest::Approx(kTk2Lo).epsilon(1e-6));
    CHECK(iv2.hi == doctest::Approx(kTk2Hi).epsilon(1e-6));
}
