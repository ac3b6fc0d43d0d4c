#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fundopt/errors.hpp"
#include "fundopt/rng.hpp"

namespace fundopt::mc {

/// Monte Carlo estimate with provenance.
struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string label;
};

/// Sample mean and standard error (sample stdev / sqrt(n)), deterministic
/// pairwise reduction. Throws EmptySample on an empty input.
McEstimate estimate(std::span<const double> values, std::string label, std::uint64_t seed);

/// Collapse antithetic pairs (plus[i], minus[i]) to per-pair means.
std::vector<double> pair_average(std::span<const double> plus, std::span<const double> minus);

/// Run fn(path_begin, path_end) over contiguous blocks of [0, n_paths).
/// threads <= 0 selects the hardware default. Blocks are fixed regardless of
/// the thread count so any per-path output layout is deterministic.
void parallel_for_paths(std::size_t n_paths, int threads,
                        const std::function<void(std::size_t, std::size_t)>& fn);

/// Evaluate a per-path functional in parallel; out[i] = fn(i, rng_i).
std::vector<double> per_path(std::size_t n_paths, int threads, const RngPlan& plan,
                             const std::function<double(std::size_t, PathRng&)>& fn);

/// Materialized bundle of exact GBM paths on a uniform grid.
/// dW and S are row-major per path; S has n_steps+1 columns.
struct PathBundle {
    double mu = 0.0;
    double sigma = 0.0;
    double T = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::uint64_t seed = 0;
    std::vector<double> times;  // n_steps + 1
    std::vector<double> dW;     // n_paths x n_steps
    std::vector<double> S;      // n_paths x (n_steps + 1)

    std::span<const double> path_dW(std::size_t i) const {
        return {dW.data() + i * n_steps, n_steps};
    }
    std::span<const double> path_S(std::size_t i) const {
        return {S.data() + i * (n_steps + 1), n_steps + 1};
    }
};

/// Exact log-space GBM simulation (no discretization bias):
/// S_t = exp(sigma W_t + (mu - sigma^2/2) t). Guards against materializing
/// more than ~2^24 doubles per array; use replay_gbm for big studies.
PathBundle simulate_gbm(double mu, double sigma, double T, std::size_t n_paths,
                        std::size_t n_steps, std::uint64_t seed, int threads = 0);

/// Strategy callback: cash invested in stock at (t, wealth, spot).
using Strategy = std::function<double(double t, double wealth, double spot)>;

/// Forward-Euler replay of dX = H dS/S on a materialized bundle. Wealth is
/// clamped at zero and frozen there (admissibility X >= 0).
std::vector<double> replay_strategy(const PathBundle& bundle, const Strategy& h, double x0);

struct ReplayStats {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double rms_target_error = 0.0;  // sqrt(mean (X_T - target(W_T))^2)
    double mean_terminal = 0.0;
    McEstimate terminal;
};

/// Streaming replay against exact GBM paths (nothing materialized): per path,
/// integrate the strategy and compare X_T with a target payoff of W_T.
ReplayStats replay_gbm(double mu, double sigma, double T, std::size_t n_paths,
                       std::size_t n_steps, std::uint64_t seed, int threads,
                       const Strategy& h, double x0,
                       const std::function<double(double)>& target_of_w);

}  // namespace fundopt::mc
