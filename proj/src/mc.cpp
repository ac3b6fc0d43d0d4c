#include "fundopt/mc.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "fundopt/math.hpp"

namespace fundopt::mc {

McEstimate estimate(std::span<const double> values, std::string label, std::uint64_t seed) {
    if (values.empty()) {
        throw EmptySample("estimate: empty sample");
    }
    const std::size_t n = values.size();
    bool constant = true;
    for (double v : values) {
        if (v != values.front()) {
            constant = false;
            break;
        }
    }
    if (constant) {
        return {values.front(), 0.0, n, seed, std::move(label)};
    }
    const double mean = pairwise_sum(values) / static_cast<double>(n);
    double se = 0.0;
    if (n > 1) {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) {
            double d = values[i] - mean;
            sq[i] = d * d;
        }
        double var = pairwise_sum(sq) / static_cast<double>(n - 1);
        se = std::sqrt(var / static_cast<double>(n));
    }
    return {mean, se, n, seed, std::move(label)};
}

std::vector<double> pair_average(std::span<const double> plus, std::span<const double> minus) {
    if (plus.size() != minus.size()) {
        throw InvalidRange("pair_average: mismatched sizes");
    }
    std::vector<double> out(plus.size());
    for (std::size_t i = 0; i < plus.size(); ++i) {
        out[i] = 0.5 * (plus[i] + minus[i]);
    }
    return out;
}

void parallel_for_paths(std::size_t n_paths, int threads,
                        const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n_paths == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t n_threads = threads > 0 ? static_cast<std::size_t>(threads)
                                        : std::max(1u, hw);
    n_threads = std::min(n_threads, n_paths);
    if (n_threads == 1) {
        fn(0, n_paths);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    std::size_t chunk = (n_paths + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(n_paths, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

std::vector<double> per_path(std::size_t n_paths, int threads, const RngPlan& plan,
                             const std::function<double(std::size_t, PathRng&)>& fn) {
    std::vector<double> out(n_paths);
    parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            PathRng rng(plan, i);
            out[i] = fn(i, rng);
        }
    });
    return out;
}

PathBundle simulate_gbm(double mu, double sigma, double T, std::size_t n_paths,
                        std::size_t n_steps, std::uint64_t seed, int threads) {
    if (!(sigma >= 0.0) || !(T > 0.0) || n_steps == 0) {
        throw InvalidRange("simulate_gbm: need sigma >= 0, T > 0, n_steps > 0");
    }
    constexpr std::size_t kMaxDoubles = std::size_t{1} << 24;
    if (n_paths * (n_steps + 1) > kMaxDoubles) {
        throw InvalidRange("simulate_gbm: bundle too large to materialize; use replay_gbm");
    }
    PathBundle b;
    b.mu = mu;
    b.sigma = sigma;
    b.T = T;
    b.n_paths = n_paths;
    b.n_steps = n_steps;
    b.seed = seed;
    b.times.resize(n_steps + 1);
    const double dt = T / static_cast<double>(n_steps);
    for (std::size_t j = 0; j <= n_steps; ++j) {
        b.times[j] = j == n_steps ? T : dt * static_cast<double>(j);
    }
    b.dW.resize(n_paths * n_steps);
    b.S.resize(n_paths * (n_steps + 1));
    const double sdt = std::sqrt(dt);
    const double drift = (mu - 0.5 * sigma * sigma) * dt;
    RngPlan plan{seed};
    parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            PathRng rng(plan, i);
            double* dw = b.dW.data() + i * n_steps;
            double* s = b.S.data() + i * (n_steps + 1);
            double logS = 0.0;
            s[0] = 1.0;
            for (std::size_t j = 0; j < n_steps; ++j) {
                dw[j] = sdt * rng.next_normal();
                logS += sigma * dw[j] + drift;
                s[j + 1] = std::exp(logS);
            }
        }
    });
    return b;
}

namespace {

/// Core wealth recursion shared by both replay entry points.
/// Returns terminal wealth; absorbs at zero.
template <typename SpotAt>
double replay_path(const Strategy& h, double x0, std::size_t n_steps, double dt,
                   SpotAt&& spot_at) {
    double x = x0;
    double s_prev = spot_at(0);
    for (std::size_t j = 0; j < n_steps; ++j) {
        double t = dt * static_cast<double>(j);
        double s_next = spot_at(j + 1);
        double cash = h(t, x, s_prev);
        x += cash * (s_next - s_prev) / s_prev;
        if (x <= 0.0) {
            return 0.0;  // absorbed; strategy frozen
        }
        s_prev = s_next;
    }
    return x;
}

}  // namespace

std::vector<double> replay_strategy(const PathBundle& bundle, const Strategy& h, double x0) {
    if (x0 < 0.0) {
        throw InvalidRange("replay_strategy: x0 must be nonnegative");
    }
    std::vector<double> out(bundle.n_paths);
    const double dt = bundle.T / static_cast<double>(bundle.n_steps);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
        auto s = bundle.path_S(i);
        out[i] = replay_path(h, x0, bundle.n_steps, dt, [&](std::size_t j) { return s[j]; });
    }
    return out;
}

ReplayStats replay_gbm(double mu, double sigma, double T, std::size_t n_paths,
                       std::size_t n_steps, std::uint64_t seed, int threads,
                       const Strategy& h, double x0,
                       const std::function<double(double)>& target_of_w) {
    if (!(sigma > 0.0) || !(T > 0.0) || n_steps == 0) {
        throw InvalidRange("replay_gbm: need sigma > 0, T > 0, n_steps > 0");
    }
    const double dt = T / static_cast<double>(n_steps);
    const double sdt = std::sqrt(dt);
    const double drift = (mu - 0.5 * sigma * sigma) * dt;
    RngPlan plan{seed};
    std::vector<double> terminal(n_paths);
    std::vector<double> sq_err(n_paths);
    parallel_for_paths(n_paths, threads, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> spots(n_steps + 1);
        for (std::size_t i = lo; i < hi; ++i) {
            PathRng rng(plan, i);
            double w = 0.0;
            double logS = 0.0;
            spots[0] = 1.0;
            for (std::size_t j = 0; j < n_steps; ++j) {
                double dw = sdt * rng.next_normal();
                w += dw;
                logS += sigma * dw + drift;
                spots[j + 1] = std::exp(logS);
            }
            double xT = replay_path(h, x0, n_steps, dt, [&](std::size_t j) { return spots[j]; });
            terminal[i] = xT;
            double diff = xT - target_of_w(w);
            sq_err[i] = diff * diff;
        }
    });
    ReplayStats st;
    st.n_paths = n_paths;
    st.n_steps = n_steps;
    st.terminal = estimate(terminal, "terminal_wealth", seed);
    st.mean_terminal = st.terminal.mean;
    st.rms_target_error = std::sqrt(pairwise_sum(sq_err) / static_cast<double>(n_paths));
    return st;
}

}  // namespace fundopt::mc
