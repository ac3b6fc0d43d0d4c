#pragma once

#include <cmath>
#include <cstdint>

namespace fundopt::mc {

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

}  // namespace detail

/// Master seed plus counter-based per-path stream derivation. A draw depends
/// only on (seed, path index, counter), never on thread placement or batch
/// order, so runs are bit-identical for any thread count.
struct RngPlan {
    std::uint64_t master_seed = 0;

    std::uint64_t path_key(std::uint64_t path) const {
        std::uint64_t z = detail::mix64(master_seed ^ detail::kGamma);
        return detail::mix64(z ^ detail::mix64(path * 0xD1B54A32D192ED03ull + 0x8BB84B93962EACC9ull));
    }
};

/// Stream of uniforms/normals for one path. Counter-indexed SplitMix64 words;
/// normals come from Box-Muller pairs, two uniforms per pair.
class PathRng {
public:
    PathRng(const RngPlan& plan, std::uint64_t path)
        : key_(plan.path_key(path)) {}

    std::uint64_t next_u64() {
        return detail::mix64(key_ + detail::kGamma * (++counter_));
    }

    /// Uniform in the open interval (0, 1).
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586477 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fundopt::mc
