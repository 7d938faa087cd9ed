#include "qfuse/distributions.hpp"

#include <cmath>
#include <numbers>

#include "qfuse/errors.hpp"

namespace qfuse {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double out;
    if (r <= 5.0) {
        r -= 1.6;
        out = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                   1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                   0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        out = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                   0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                   7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -out : out;
}

double student_t_cdf(double t, int nu) {
    if (nu < 1) throw DomainError("Student-t needs nu >= 1");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    // closed-form finite series in theta = atan(t / sqrt(nu))
    const double theta = std::atan(t / std::sqrt(static_cast<double>(nu)));
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    double a;
    if (nu % 2 == 1) {
        double sum = 0.0;
        if (nu > 1) {
            double term = c;
            sum = term;
            for (int k = 3; k <= nu - 2; k += 2) {
                term *= c * c * static_cast<double>(k - 1) / static_cast<double>(k);
                sum += term;
            }
        }
        a = (2.0 / std::numbers::pi) * (theta + s * sum);
    } else {
        double term = 1.0;
        double sum = 1.0;
        for (int k = 2; k <= nu - 2; k += 2) {
            term *= c * c * static_cast<double>(k - 1) / static_cast<double>(k);
            sum += term;
        }
        a = s * sum;
    }
    return 0.5 * (1.0 + a);
}

double student_t_quantile(double p, int nu) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("Student-t quantile needs p in (0,1)");
    if (nu < 1) throw DomainError("Student-t needs nu >= 1");
    if (p == 0.5) return 0.0;
    double lo = -1.0;
    double hi = 1.0;
    while (student_t_cdf(lo, nu) > p) lo *= 2.0;
    while (student_t_cdf(hi, nu) < p) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (student_t_cdf(mid, nu) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double Rng::uniform() {
    for (;;) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
    }
}

double Rng::chi_square(int nu) {
    double sum = 0.0;
    for (int k = 0; k < nu; ++k) {
        const double z = normal();
        sum += z * z;
    }
    return sum;
}

double Rng::student_t(int nu) {
    const double z = normal();
    return z / std::sqrt(chi_square(nu) / static_cast<double>(nu));
}

}  // namespace qfuse
