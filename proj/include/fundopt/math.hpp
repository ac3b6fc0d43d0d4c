#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "fundopt/errors.hpp"

namespace fundopt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Standard normal density.
inline double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Standard normal CDF via erfc (accurate in both tails).
inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

/// Standard normal quantile. Acklam's rational approximation polished with
/// one Halley step; good to ~1e-15 over (0,1).
double norm_quantile(double u);

struct BisectOptions {
    double x_tol = 1e-12;
    int max_iter = 200;
};

/// Root of f on [lo, hi]; f(lo) and f(hi) must have opposite signs.
/// Throws ConvergenceError if the bracket is invalid or the iteration budget
/// runs out before reaching x_tol.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              const BisectOptions& opt = {});

struct GoldenOptions {
    double x_tol = 1e-12;
    int max_iter = 200;
};

struct GoldenResult {
    double x;
    double value;
};

/// Minimum of a unimodal f on [a, b] by golden-section search.
GoldenResult golden_min(const std::function<double(double)>& f, double a, double b,
                        const GoldenOptions& opt = {});

/// Deterministic pairwise sum (fixed reduction order, independent of threads).
double pairwise_sum(std::span<const double> values);

/// n points linearly spaced over [a, b] inclusive.
std::vector<double> linspace(double a, double b, std::size_t n);

/// n points log-spaced over [a, b] inclusive; requires 0 < a < b.
std::vector<double> logspace(double a, double b, std::size_t n);

}  // namespace fundopt
