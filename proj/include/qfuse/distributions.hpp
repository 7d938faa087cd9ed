#pragma once

// Normal and Student-t distribution functions plus the seeded random stream
// used by the simulation drivers.

#include <cstdint>
#include <random>

namespace qfuse {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, AS241 (PPND16) rational approximation.
double normal_quantile(double p);

/// Student-t CDF for integer degrees of freedom.
double student_t_cdf(double t, int nu);

/// Student-t quantile for integer degrees of freedom.
double student_t_quantile(double p, int nu);

/// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Reproducible stream: mt19937_64 seeded by splitmix64(seed ^ stream).
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(splitmix64(seed ^ stream)) {}

    /// Uniform on (0,1) from 53 random bits; never returns 0 or 1.
    double uniform();
    /// Standard normal by inversion.
    double normal() { return normal_quantile(uniform()); }
    /// Chi-square with integer degrees of freedom, as a sum of squared normals.
    double chi_square(int nu);
    double student_t(int nu);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace qfuse
