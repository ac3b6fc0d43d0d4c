#include "fundopt/math.hpp"

#include <algorithm>
#include <cmath>

namespace fundopt {

double norm_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) {
        throw DomainError("norm_quantile: argument must lie in (0,1)");
    }
    // Acklam's piecewise rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (u < plow) {
        double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - plow) {
        double q = u - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Halley step against the exact CDF.
    double e = norm_cdf(x) - u;
    double p = norm_pdf(x);
    if (p > 0.0) {
        double t = e / p;
        x -= t / (1.0 + 0.5 * x * t);
    }
    return x;
}

double bisect(const std::function<double(double)>& f, double lo, double hi,
              const BisectOptions& opt) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (!(lo < hi) || (flo > 0.0) == (fhi > 0.0)) {
        throw ConvergenceError("bisect: invalid bracket");
    }
    for (int i = 0; i < opt.max_iter; ++i) {
        double mid = 0.5 * (lo + hi);
        if (hi - lo <= opt.x_tol * std::max(1.0, std::abs(mid))) {
            return mid;
        }
        double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    throw ConvergenceError("bisect: iteration budget exhausted");
}

GoldenResult golden_min(const std::function<double(double)>& f, double a, double b,
                        const GoldenOptions& opt) {
    if (!(a <= b)) {
        throw ConvergenceError("golden_min: invalid interval");
    }
    const double invphi = 0.6180339887498948482;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int i = 0; i < opt.max_iter && (b - a) > opt.x_tol * std::max(1.0, std::abs(a) + std::abs(b)); ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    double xm = 0.5 * (a + b);
    return {xm, f(xm)};
}

namespace {

double pairwise_sum_impl(const double* v, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum_impl(v, half) + pairwise_sum_impl(v + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    return pairwise_sum_impl(values.data(), values.size());
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out;
    if (n == 0) return out;
    out.reserve(n);
    if (n == 1) {
        out.push_back(a);
        return out;
    }
    double step = (b - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(i + 1 == n ? b : a + step * static_cast<double>(i));
    }
    return out;
}

std::vector<double> logspace(double a, double b, std::size_t n) {
    if (!(a > 0.0 && b > a)) {
        throw DomainError("logspace: requires 0 < a < b");
    }
    std::vector<double> out = linspace(std::log(a), std::log(b), n);
    for (double& x : out) x = std::exp(x);
    if (!out.empty()) {
        out.front() = a;
        out.back() = b;
    }
    return out;
}

}  // namespace fundopt
