#pragma once

#include <cmath>
#include <complex>

#include "mzi/common.hpp"

namespace mzi {

using complexd = std::complex<double>;

/// Two-mode optical field between elements of the interferometer.
///
/// amp1/amp2 are the complex arm (or output-port) amplitudes in dimensionless
/// field units, so |amp|^2 is a power. gamma is the mutual-coherence factor
/// of the two modes: it scales only the interference cross term at detection,
/// which makes the best achievable fringe visibility of the instrument equal
/// to gamma while leaving energy transport untouched.
struct TwoModeField {
    complexd amp1{0.0, 0.0};
    complexd amp2{0.0, 0.0};
    double gamma = 1.0;

    TwoModeField() = default;
    TwoModeField(complexd a1, complexd a2, double coherence = 1.0)
        : amp1(a1), amp2(a2), gamma(coherence) {
        detail::require_finite(a1.real(), "amp1");
        detail::require_finite(a1.imag(), "amp1");
        detail::require_finite(a2.real(), "amp2");
        detail::require_finite(a2.imag(), "amp2");
        detail::require_unit_interval(coherence, "gamma");
    }
};

/// Fraction of input power routed to arm/port 2 at a splitter or merger.
class SplitRatio {
public:
    explicit SplitRatio(double r) : r_(r) {
        detail::require_unit_interval(r, "split ratio");
    }
    double value() const { return r_; }

private:
    double r_;
};

/// Fractional power absorbed on channel 1 and channel 2.
class LossPair {
public:
    LossPair(double l1, double l2) : l1_(l1), l2_(l2) {
        detail::require_unit_interval(l1, "l1");
        detail::require_unit_interval(l2, "l2");
    }
    static LossPair none() { return {0.0, 0.0}; }
    double l1() const { return l1_; }
    double l2() const { return l2_; }
    LossPair swapped() const { return {l2_, l1_}; }

private:
    double l1_, l2_;
};

/// Quantum efficiencies of the two intensity detectors.
class DetectorPair {
public:
    DetectorPair(double q1, double q2) : q1_(q1), q2_(q2) {
        detail::require_finite(q1, "q1");
        detail::require_finite(q2, "q2");
        detail::require(q1 > 0.0 && q1 <= 1.0, "q1 must lie in (0, 1]");
        detail::require(q2 > 0.0 && q2 <= 1.0, "q2 must lie in (0, 1]");
    }
    double q1() const { return q1_; }
    double q2() const { return q2_; }
    DetectorPair swapped() const { return {q2_, q1_}; }

private:
    double q1_, q2_;
};

/// Registered intensities at the two detectors. Always nonnegative.
struct Readings {
    double i1 = 0.0;
    double i2 = 0.0;
};

inline double total_power(const TwoModeField& f) {
    return std::norm(f.amp1) + std::norm(f.amp2);
}

/// Lossless beam splitter with power ratio r to port 2.
///
/// Uses the real symmetric convention
///   out1 =  t*amp1 + s*amp2,   out2 = s*amp1 - t*amp2,
/// with t = sqrt(1-r), s = sqrt(r). The matrix is orthogonal and its own
/// inverse, so applying the same element twice restores the input.
inline TwoModeField apply_splitter(const TwoModeField& f, SplitRatio ratio) {
    const double t = std::sqrt(1.0 - ratio.value());
    const double s = std::sqrt(ratio.value());
    TwoModeField out;
    out.amp1 = t * f.amp1 + s * f.amp2;
    out.amp2 = s * f.amp1 - t * f.amp2;
    out.gamma = f.gamma;
    return out;
}

/// Relative phase shift: arm 2 advances by phi radians.
inline TwoModeField apply_phase(const TwoModeField& f, double phi) {
    detail::require_finite(phi, "phi");
    TwoModeField out = f;
    out.amp2 = f.amp2 * std::polar(1.0, phi);
    return out;
}

/// Absorptive attenuation: each amplitude is scaled by sqrt(1 - l).
inline TwoModeField apply_loss(const TwoModeField& f, const LossPair& losses) {
    TwoModeField out = f;
    out.amp1 = f.amp1 * std::sqrt(1.0 - losses.l1());
    out.amp2 = f.amp2 * std::sqrt(1.0 - losses.l2());
    return out;
}

/// Recombines the two modes on a merger with ratio `merge` and returns the
/// intensities registered by the two detectors.
///
/// The coherent cross term carries the field's gamma factor; for unit
/// efficiencies the two readings always sum to the incident power because the
/// cross terms cancel between the ports, for every gamma and relative phase.
inline Readings merge_and_detect(const TwoModeField& f, SplitRatio merge,
                                 const DetectorPair& detectors) {
    const double t2 = 1.0 - merge.value();
    const double s2 = merge.value();
    const double ts = std::sqrt(t2 * s2);
    const double p1 = std::norm(f.amp1);
    const double p2 = std::norm(f.amp2);
    // Re(conj(amp1)*amp2) = |amp1||amp2| cos(phase difference)
    const double cross = (std::conj(f.amp1) * f.amp2).real();
    Readings out;
    out.i1 = detectors.q1() * (t2 * p1 + s2 * p2 + 2.0 * f.gamma * ts * cross);
    out.i2 = detectors.q2() * (s2 * p1 + t2 * p2 - 2.0 * f.gamma * ts * cross);
    if (out.i1 < 0.0) out.i1 = 0.0;  // guard rounding at full destruction
    if (out.i2 < 0.0) out.i2 = 0.0;
    return out;
}

}  // namespace mzi
