#include "chirpjoint/ambiguity.hpp"

#include "chirpjoint/errors.hpp"

#include <cmath>
#include <numeric>

namespace chirpjoint {

Rational rational_approximation(double x, long long max_denominator) {
    if (!(x > 0) || !std::isfinite(x)) throw InvalidArgument("rational_approximation: x must be positive");
    // Convergents h_k / k_k of the continued fraction of x.
    long long h_prev = 1, h = static_cast<long long>(std::floor(x));
    long long k_prev = 0, k = 1;
    double rem = x - std::floor(x);
    while (rem > 1e-9 * x) {
        const double inv = 1.0 / rem;
        const long long a = static_cast<long long>(std::floor(inv));
        const long long k_next = a * k + k_prev;
        if (k_next > max_denominator) break;
        const long long h_next = a * h + h_prev;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
        rem = inv - static_cast<double>(a);
        if (std::abs(x - static_cast<double>(h) / static_cast<double>(k)) <= 1e-12 * x) break;
    }
    return {h, k};
}

AmbiguitySpan ambiguity_span(const RadarScenario& s, long long max_denominator) {
    if (s.num_sequences() < 2) throw InvalidArgument("ambiguity_span requires at least two sequences");
    const double tri = s.tri();
    const double base_period_hz = 1.0 / (s.num_tx() * tri);

    // lcm(x, y) for reals with y / x = p / q reduced is p * x.
    long long multiple = 1;
    double period = base_period_hz;
    for (int l = 1; l < s.num_sequences(); ++l) {
        const double shift = s.plan.sequence_offsets_s[l] - s.plan.sequence_offsets_s[0];
        const double other = 1.0 / shift;
        const Rational r = rational_approximation(other / period, max_denominator);
        const long long g = std::gcd(r.num, r.den);
        const long long p = r.num / g;
        multiple *= p;
        period *= static_cast<double>(p);
    }
    const double lambda = s.waveform.wavelength_m();
    return {base_period_hz * lambda / 2.0, period * lambda / 2.0, multiple};
}

double single_sequence_span_mps(const RadarScenario& s) {
    return s.waveform.wavelength_m() / (2.0 * s.num_tx() * s.tri());
}

} // namespace chirpjoint
