#include "fundopt/models.hpp"

#include <algorithm>
#include <cmath>

#include "fundopt/math.hpp"

namespace fundopt::models {

// ---------------------------------------------------------------------------
// ExcessRate
// ---------------------------------------------------------------------------

double ExcessRate::operator()(double w) const {
    switch (kind) {
        case Kind::tanh_shaped:
            return scale * std::tanh(w / width);
        case Kind::constant:
            return scale;
        case Kind::zero:
            return 0.0;
    }
    return 0.0;
}

ExcessRate ExcessRate::tanh_shaped(double scale, double width) {
    if (!(width > 0.0)) throw DomainError("excess rate: width must be positive");
    return {Kind::tanh_shaped, scale, width};
}

ExcessRate ExcessRate::constant(double value) {
    return {Kind::constant, value, 1.0};
}

ExcessRate ExcessRate::none() {
    return {Kind::zero, 0.0, 1.0};
}

// ---------------------------------------------------------------------------
// ThetaFn
// ---------------------------------------------------------------------------

ThetaFn ThetaFn::constant(double c) {
    ThetaFn f;
    f.segments_.push_back({0.0, {c}});
    return f;
}

ThetaFn ThetaFn::step(std::vector<std::pair<double, double>> knots) {
    if (knots.empty() || knots.front().first != 0.0) {
        throw DomainError("theta step function must start at t = 0");
    }
    ThetaFn f;
    double prev = -1.0;
    for (const auto& [t, v] : knots) {
        if (t <= prev) throw DomainError("theta step times must be increasing");
        prev = t;
        f.segments_.push_back({t, {v}});
    }
    return f;
}

ThetaFn ThetaFn::linear(double a, double b) {
    ThetaFn f;
    f.segments_.push_back({0.0, {a, b}});
    return f;
}

double ThetaFn::value(double t) const {
    std::size_t i = segments_.size();
    while (i > 1 && segments_[i - 1].t_lo > t) --i;
    const auto& seg = segments_[i - 1];
    double v = 0.0, tp = 1.0;
    for (double c : seg.coeffs) {
        v += c * tp;
        tp *= t;
    }
    return v;
}

double ThetaFn::inner(const ThetaFn& a, const ThetaFn& b, double T) {
    // Merge segment boundaries, multiply polynomials, integrate monomials.
    std::vector<double> cuts = {0.0, T};
    for (const auto& s : a.segments_) {
        if (s.t_lo < T) cuts.push_back(s.t_lo);
    }
    for (const auto& s : b.segments_) {
        if (s.t_lo < T) cuts.push_back(s.t_lo);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto coeffs_at = [](const ThetaFn& f, double t) -> const std::vector<double>& {
        std::size_t i = f.segments_.size();
        while (i > 1 && f.segments_[i - 1].t_lo > t) --i;
        return f.segments_[i - 1].coeffs;
    };

    double total = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        double lo = cuts[s], hi = cuts[s + 1];
        if (!(hi > lo)) continue;
        double mid = 0.5 * (lo + hi);
        const auto& ca = coeffs_at(a, mid);
        const auto& cb = coeffs_at(b, mid);
        std::vector<double> prod(ca.size() + cb.size() - 1, 0.0);
        for (std::size_t i = 0; i < ca.size(); ++i) {
            for (std::size_t j = 0; j < cb.size(); ++j) prod[i + j] += ca[i] * cb[j];
        }
        // Integrate sum_m prod[m] t^m over [lo, hi].
        double acc = 0.0;
        double lo_pow = lo, hi_pow = hi;
        for (std::size_t m = 0; m < prod.size(); ++m) {
            acc += prod[m] * (hi_pow - lo_pow) / static_cast<double>(m + 1);
            lo_pow *= lo;
            hi_pow *= hi;
        }
        total += acc;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

void SvSpec::validate() const {
    if (!(T > 0.0) || !(y0 > 0.0)) throw DomainError("sv model: need T > 0 and y0 > 0");
    if (!(rho > -1.0 && rho < 1.0)) throw DomainError("sv model: rho must lie in (-1, 1)");
    if (variant == SvVariant::heston && !(2.0 * kappa * mean > xi * xi)) {
        throw ModelGuardError("heston: Feller condition 2 kappa mean > xi^2 violated");
    }
}

namespace {

/// Lower-triangular Cholesky factor; throws GramianSingular when the matrix
/// is not numerically positive definite or its determinant is ~ 0.
std::vector<double> cholesky(const std::vector<double>& g, std::size_t n) {
    std::vector<double> l(n * n, 0.0);
    double det = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = g[i * n + j];
            for (std::size_t m = 0; m < j; ++m) s -= l[i * n + m] * l[j * n + m];
            if (i == j) {
                if (!(s > 0.0)) throw GramianSingular("gramian not positive definite");
                l[i * n + i] = std::sqrt(s);
                det *= s;
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    if (det <= 1e-10) throw GramianSingular("gramian determinant at or below 1e-10");
    return l;
}

void validate_mixture(const MixtureSpec& spec) {
    if (spec.probs.empty() || spec.probs.size() != spec.thetas.size()) {
        throw DomainError("mixture: probs and thetas must have matching nonzero size");
    }
    double s = 0.0;
    for (double p : spec.probs) {
        if (!(p > 0.0)) throw DomainError("mixture: probabilities must be positive");
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DomainError("mixture: probabilities must sum to one");
    if (!(spec.T > 0.0)) throw DomainError("mixture: T must be positive");
}

}  // namespace

DensitySample sample_mixture_density(const MixtureSpec& spec, std::span<const double> q,
                                     std::size_t n_paths, std::uint64_t seed, int threads) {
    validate_mixture(spec);
    const std::size_t n = spec.probs.size();
    if (q.size() != n) throw DomainError("mixture: q has wrong dimension");
    double qs = 0.0;
    for (double qi : q) {
        if (!(qi > 0.0)) throw DomainError("mixture: q must be strictly positive");
        qs += qi;
    }
    if (std::abs(qs - 1.0) > 1e-9) throw DomainError("mixture: q must sum to one");

    // The density is regime-conditional: on {X = i} it equals
    // (q_i / p_i) E(-int theta_i dW)_T, and the component log-integrals form
    // one Gaussian vector with the Gram matrix of the thetas (exact, no time
    // stepping). E[Z] = sum q_i = 1 for any admissible q.
    std::vector<double> g(n * n);
    double g_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            g[i * n + j] = ThetaFn::inner(spec.thetas[i], spec.thetas[j], spec.T);
            g_max = std::max(g_max, std::abs(g[i * n + j]));
        }
    }
    const bool degenerate = g_max == 0.0;  // all rates vanish: Z = q_X / p_X
    std::vector<double> l;
    if (!degenerate) l = cholesky(g, n);

    std::vector<double> cum_p(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += spec.probs[i];
        cum_p[i] = acc;
    }
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) {
        weights[i] = q[i] / spec.probs[i] *
                     (degenerate ? 1.0 : std::exp(-0.5 * g[i * n + i]));
    }

    DensitySample ds;
    ds.z.resize(n_paths);
    ds.regime.resize(n_paths);
    ds.seed = seed;
    ds.n_steps = 0;
    ds.model = "mixture";
    mc::RngPlan plan{seed};
    mc::parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> xi(n);
        for (std::size_t path = lo; path < hi; ++path) {
            mc::PathRng rng(plan, path);
            for (std::size_t i = 0; i < n; ++i) xi[i] = rng.next_normal();
            double u = rng.next_uniform();
            std::size_t regime = 0;
            while (regime + 1 < n && u > cum_p[regime]) ++regime;
            double v = 0.0;
            if (!degenerate) {
                for (std::size_t m = 0; m <= regime; ++m) v += l[regime * n + m] * xi[m];
            }
            ds.z[path] = weights[regime] * std::exp(-v);
            ds.regime[path] = static_cast<std::uint32_t>(regime);
        }
    });
    return ds;
}

SvSampleResult sample_sv_density(const SvSpec& spec, std::size_t n_paths, std::size_t n_steps,
                                 std::uint64_t seed, int threads) {
    spec.validate();
    if (n_steps == 0 || n_paths == 0) {
        throw InvalidRange("sample_sv_density: need paths and steps");
    }
    const double dt = spec.T / static_cast<double>(n_steps);
    const double sdt = std::sqrt(dt);
    const double rho2 = std::sqrt(1.0 - spec.rho * spec.rho);

    SvSampleResult out;
    out.sample.z.resize(n_paths);
    out.sample.seed = seed;
    out.sample.n_steps = n_steps;
    out.step_too_coarse = static_cast<double>(n_steps) < 64.0 * spec.T;

    std::vector<double> truncated(n_paths, 0.0);
    mc::RngPlan plan{seed};
    mc::parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t path = lo; path < hi; ++path) {
            mc::PathRng rng(plan, path);
            double w1 = 0.0;
            double y = spec.y0;
            double log_z = 0.0;
            double trunc = 0.0;
            for (std::size_t j = 0; j < n_steps; ++j) {
                double dw1 = sdt * rng.next_normal();
                double dw2 = sdt * rng.next_normal();
                double db = spec.rho * dw1 + rho2 * dw2;
                double th = spec.f(w1);
                log_z += -th * dw1 - 0.5 * th * th * dt;
                switch (spec.variant) {
                    case SvVariant::hull_white:
                        y *= std::exp((spec.b - 0.5 * spec.a * spec.a) * dt + spec.a * db);
                        break;
                    case SvVariant::scott:
                        y += spec.kappa * (spec.mean - y) * dt + spec.xi * db;
                        break;
                    case SvVariant::heston: {
                        double v_plus = std::max(y, 0.0);
                        if (y < 0.0) trunc += 1.0;
                        y += spec.kappa * (spec.mean - v_plus) * dt +
                             spec.xi * std::sqrt(v_plus) * db;
                        break;
                    }
                }
                w1 += dw1;
            }
            out.sample.z[path] = std::exp(log_z);
            truncated[path] = trunc;
        }
    });
    switch (spec.variant) {
        case SvVariant::hull_white: out.sample.model = "hull_white"; break;
        case SvVariant::scott: out.sample.model = "scott"; break;
        case SvVariant::heston: out.sample.model = "heston"; break;
    }
    out.truncated_fraction = pairwise_sum(truncated) /
                             (static_cast<double>(n_paths) * static_cast<double>(n_steps));
    return out;
}

// ---------------------------------------------------------------------------
// Dual values
// ---------------------------------------------------------------------------

DualValueMc dual_value_mc_sv(const SvSpec& spec, const DualUtility& du, double y,
                             std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
                             int threads) {
    if (!(y > 0.0)) throw DomainError("dual_value_mc: y must be positive");
    auto sv = sample_sv_density(spec, n_paths, n_steps, seed, threads);
    std::vector<double> vals(sv.sample.z.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        vals[i] = du.value(y * sv.sample.z[i]);
    }
    DualValueMc out;
    out.estimate = mc::estimate(vals, "dual_value_sv", seed);
    return out;
}

DualValueMc dual_value_mc_mixture(const MixtureSpec& spec, const DualUtility& du, double y,
                                  std::size_t n_paths, std::uint64_t seed, int threads) {
    if (!(y > 0.0)) throw DomainError("dual_value_mc: y must be positive");
    validate_mixture(spec);
    const std::size_t n = spec.probs.size();

    // Common random numbers over q: the realized regime and its density
    // factor are fixed per path, so Z^q = q_regime * factor is linear in q
    // and the objective a deterministic convex function of q.
    auto base = sample_mixture_density(spec, spec.probs, n_paths, seed, threads);
    std::vector<double> factor(n_paths);
    for (std::size_t path = 0; path < n_paths; ++path) {
        // base was sampled at q = p, i.e. z = exp(-V_r - G_rr/2); dividing by
        // p_r leaves the factor with Z^q = q_r * factor for any q.
        factor[path] = base.z[path] / spec.probs[base.regime[path]];
    }

    std::vector<double> vals(n_paths);
    auto fill_values = [&](std::span<const double> q) {
        mc::parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t path = lo; path < hi; ++path) {
                vals[path] = du.value(y * q[base.regime[path]] * factor[path]);
            }
        });
    };
    auto objective = [&](std::span<const double> q) {
        fill_values(q);
        return pairwise_sum(vals) / static_cast<double>(n_paths);
    };

    std::vector<double> q(n, 1.0 / static_cast<double>(n));
    if (n > 1) {
        GoldenOptions gopt;
        gopt.x_tol = 1e-9;
        gopt.max_iter = 64;
        double value = objective(q);
        for (int sweep = 0; sweep < 16; ++sweep) {
            double before = value;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double floor = 1e-9;
                    double t_lo = -(q[i] - floor);
                    double t_hi = q[j] - floor;
                    if (!(t_hi > t_lo)) continue;
                    auto line = [&](double t) {
                        std::vector<double> qq = q;
                        qq[i] += t;
                        qq[j] -= t;
                        return objective(qq);
                    };
                    auto gr = golden_min(line, t_lo, t_hi, gopt);
                    if (gr.value < value) {
                        q[i] += gr.x;
                        q[j] -= gr.x;
                        value = gr.value;
                    }
                }
            }
            if (before - value < 1e-10 * (1.0 + std::abs(value))) break;
        }
    }
    fill_values(q);
    DualValueMc out;
    out.estimate = mc::estimate(vals, "dual_value_mixture", seed);
    out.q_star = q;
    out.min_q = *std::min_element(q.begin(), q.end());
    return out;
}

// ---------------------------------------------------------------------------
// Atom diagnostics
// ---------------------------------------------------------------------------

AtomDiagnostic atom_diagnostic(const DensitySample& ds) {
    const std::size_t n = ds.z.size();
    if (n < 1000) throw InvalidRange("atom_diagnostic: need at least 1000 samples");
    std::vector<double> z = ds.z;
    std::sort(z.begin(), z.end());

    AtomDiagnostic diag;
    diag.n = n;
    std::size_t run_start = 0;
    std::size_t best_count = 1;
    double best_value = z[0];
    for (std::size_t i = 1; i <= n; ++i) {
        bool same = i < n && std::abs(z[i] - z[run_start]) <=
                                 1e-12 * std::max(1.0, std::abs(z[run_start]));
        if (!same) {
            std::size_t count = i - run_start;
            if (count > best_count) {
                best_count = count;
                best_value = z[run_start];
            }
            run_start = i;
        }
    }
    diag.max_cdf_jump = static_cast<double>(best_count) / static_cast<double>(n);
    double threshold = std::max(10.0 / static_cast<double>(n), 0.01);
    if (diag.max_cdf_jump > threshold) {
        diag.atom_detected = true;
        diag.atom_value = best_value;
        diag.atom_mass = diag.max_cdf_jump;
    }

    // KS distance between the empirical CDF and its Gaussian-kernel smoothing.
    double mean = pairwise_sum(z) / static_cast<double>(n);
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n > 1 ? n - 1 : 1);
    double iqr = z[(3 * n) / 4] - z[n / 4];
    double spread = std::min(std::sqrt(var), iqr / 1.34);
    double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    if (!(h > 0.0)) h = 1e-12;

    const std::size_t n_eval = 256;
    double ks = 0.0;
    for (std::size_t e = 0; e < n_eval; ++e) {
        std::size_t idx = (e * (n - 1)) / (n_eval - 1);
        double x = z[idx];
        // Empirical CDF at x (right-continuous) via the last index <= x.
        std::size_t hi = std::upper_bound(z.begin(), z.end(), x) - z.begin();
        double f_emp = static_cast<double>(hi) / static_cast<double>(n);
        double f_smooth = 0.0;
        for (double v : z) f_smooth += norm_cdf((x - v) / h);
        f_smooth /= static_cast<double>(n);
        ks = std::max(ks, std::abs(f_emp - f_smooth));
    }
    diag.ks_to_smoothed = ks;
    return diag;
}

}  // namespace fundopt::models
