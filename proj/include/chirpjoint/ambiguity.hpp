#pragma once

#include "chirpjoint/scenario.hpp"

namespace chirpjoint {

/// Extended unambiguous velocity interval of a multi-sequence plan.
///
/// One sequence with K_Tx DDM transmitters wraps the Doppler frequency with
/// period 1 / (K_Tx T_ri). The phase between sequence 1 and sequence l wraps
/// with period 1 / T_l. Jointly the Doppler is unambiguous over the least
/// common multiple of these periods; non-rational ratios are approximated by
/// continued fractions with denominators up to `max_denominator`.
struct AmbiguitySpan {
    /// Full width of the single-sequence interval, lambda / (2 K_Tx T_ri).
    double single_sequence_mps;
    /// Full width of the jointly unambiguous interval.
    double extended_mps;
    /// extended / single_sequence.
    long long multiple;
};

AmbiguitySpan ambiguity_span(const RadarScenario& s, long long max_denominator = 10'000);

/// lambda / (2 K_Tx T_ri); defined for any number of sequences.
double single_sequence_span_mps(const RadarScenario& s);

struct Rational {
    long long num;
    long long den;
};

/// Best rational approximation with den <= max_denominator (continued fractions).
Rational rational_approximation(double x, long long max_denominator);

} // namespace chirpjoint
