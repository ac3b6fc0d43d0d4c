#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundopt/mc.hpp"
#include "fundopt/utility.hpp"

namespace fundopt::models {

/// Bounded C1 excess appreciation rate driving the market price of risk
/// theta_t = f(W^1_t). The shaped default m tanh(w/s) satisfies every
/// regularity hypothesis without being identically zero.
struct ExcessRate {
    enum class Kind { tanh_shaped, constant, zero };
    Kind kind = Kind::tanh_shaped;
    double scale = 0.3;
    double width = 1.0;

    double operator()(double w) const;
    static ExcessRate tanh_shaped(double scale, double width = 1.0);
    static ExcessRate constant(double value);
    static ExcessRate none();
};

/// Deterministic piecewise-polynomial market price of risk for one mixture
/// component; inner products integrate in closed form.
class ThetaFn {
public:
    struct Segment {
        double t_lo = 0.0;
        std::vector<double> coeffs;  // polynomial in t, ascending powers
    };

    static ThetaFn constant(double c);
    /// Right-continuous step function from (time, value) pairs; first time 0.
    static ThetaFn step(std::vector<std::pair<double, double>> knots);
    /// a + b t on the whole horizon.
    static ThetaFn linear(double a, double b);

    double value(double t) const;
    /// Closed-form integral of theta_a(t) theta_b(t) over [0, T].
    static double inner(const ThetaFn& a, const ThetaFn& b, double T);

private:
    std::vector<Segment> segments_;
};

struct MixtureSpec {
    std::vector<double> probs;
    std::vector<ThetaFn> thetas;
    double T = 1.0;
};

enum class SvVariant { hull_white, scott, heston };

/// Stochastic-volatility model with a bond at rate folded away and the
/// density process depending on W^1 only.
struct SvSpec {
    SvVariant variant = SvVariant::hull_white;
    // hull_white: dY = b Y dt + a Y dB;  scott: dY = kappa (mean - Y) dt + xi dB;
    // heston:    dY = kappa (mean - Y) dt + xi sqrt(Y) dB, 2 kappa mean > xi^2.
    double b = 0.1;
    double a = 0.3;
    double kappa = 1.5;
    double mean = 0.04;
    double xi = 0.2;
    double rho = -0.5;
    double y0 = 0.04;
    ExcessRate f;
    double T = 1.0;

    void validate() const;  // throws ModelGuardError on a Feller violation
};

struct DensitySample {
    std::vector<double> z;
    std::uint64_t seed = 0;
    std::size_t n_steps = 0;  // zero for exact samplers
    std::string model;
    std::vector<std::uint32_t> regime;  // mixture component per path (mixture only)
};

/// Exact sampler for the mixture density: the component log-integrals are a
/// Gaussian vector with the Gram matrix of the thetas, so no time stepping
/// is involved. Throws GramianSingular when the Gram determinant is ~ 0.
DensitySample sample_mixture_density(const MixtureSpec& spec, std::span<const double> q,
                                     std::size_t n_paths, std::uint64_t seed, int threads = 0);

struct SvSampleResult {
    DensitySample sample;
    double truncated_fraction = 0.0;  // Heston steps evaluated at clipped variance
    bool step_too_coarse = false;     // n_steps < 64 T
};

/// Euler sampler in log-space for the minimal density Z_T = E(-int f(W^1) dW^1);
/// the volatility factor is simulated jointly (with correlation rho) even
/// though Z does not depend on it.
SvSampleResult sample_sv_density(const SvSpec& spec, std::size_t n_paths, std::size_t n_steps,
                                 std::uint64_t seed, int threads = 0);

struct DualValueMc {
    mc::McEstimate estimate;
    std::vector<double> q_star;  // mixture only
    double min_q = 1.0;          // boundary proximity of the mixture minimizer
};

/// Monte Carlo dual value E[conj(y Z_T)] using the minimal martingale density.
DualValueMc dual_value_mc_sv(const SvSpec& spec, const DualUtility& du, double y,
                             std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
                             int threads = 0);

/// Mixture dual value minimized over the component weights q (common random
/// numbers across q; pairwise golden-section descent on the simplex).
DualValueMc dual_value_mc_mixture(const MixtureSpec& spec, const DualUtility& du, double y,
                                  std::size_t n_paths, std::uint64_t seed, int threads = 0);

struct AtomDiagnostic {
    double max_cdf_jump = 0.0;
    double ks_to_smoothed = 0.0;
    std::size_t n = 0;
    bool atom_detected = false;
    double atom_value = 0.0;
    double atom_mass = 0.0;
};

/// Empirical atom detection: the largest CDF jump after merging equal values,
/// flagged against max(10/n, 0.01); plus the KS distance between the
/// empirical CDF and its Gaussian-kernel smoothing (Silverman bandwidth).
AtomDiagnostic atom_diagnostic(const DensitySample& ds);

}  // namespace fundopt::models
