#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mzi/common.hpp"
#include "mzi/optics.hpp"

namespace mzi {

/// Which element of the interferometer carries the variable ratio.
enum class Configuration {
    SplitterVariable,  // variable beam splitter, fixed 50/50 merger
    MergerVariable,    // fixed 50/50 splitter, variable beam merger
};

/// Where the deliberate losses sit relative to the interferometer arms.
enum class LossPlacement { None, Inside, Outside };

/// Provenance of a duality data point.
enum class Source { Analytic, Protocol, MonteCarlo };

/// Full parameter set of one experiment, everything except the variable
/// ratio: loss placement and magnitudes, detector efficiencies, and the
/// instrument's maximum fringe visibility v0 (modeled as mutual coherence).
struct ExperimentConfig {
    Configuration configuration = Configuration::SplitterVariable;
    LossPlacement loss_placement = LossPlacement::None;
    LossPair losses = LossPair::none();
    DetectorPair efficiencies{1.0, 1.0};
    double v0 = 1.0;

    ExperimentConfig() = default;
    ExperimentConfig(Configuration c, LossPlacement p, LossPair l, DetectorPair q, double vis0)
        : configuration(c), loss_placement(p), losses(l), efficiencies(q), v0(vis0) {
        detail::require_unit_interval(vis0, "v0");
        if (p == LossPlacement::None) {
            detail::require(l.l1() == 0.0 && l.l2() == 0.0,
                            "loss placement 'none' requires zero losses");
        }
    }

    /// The path/detector-swapped wiring: losses and efficiencies exchanged
    /// between the two channels.
    ExperimentConfig swapped() const {
        return {configuration, loss_placement, losses.swapped(), efficiencies.swapped(), v0};
    }
};

/// One (ratio, predictability, visibility) sample. Configurations with a
/// single fringe visibility duplicate it into both v slots so a dataset has
/// one uniform shape; the merger-variable/losses-inside case carries the two
/// genuinely different per-detector visibilities.
struct DualityPoint {
    double r = 0.0;
    double p = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;
    double duality1 = 0.0;  // p^2 + v1^2
    double duality2 = 0.0;  // p^2 + v2^2
    Source source = Source::Analytic;
};

/// Normalized which-path imbalance |w1 - w2| / (w1 + w2).
inline double predictability(double w1, double w2) {
    detail::require(w1 >= 0.0 && w2 >= 0.0, "weights must be nonnegative");
    const double sum = w1 + w2;
    if (sum <= 0.0)
        throw degenerate_input_error("no light detected: both which-way weights are zero");
    return std::abs(w1 - w2) / sum;
}

/// Fringe contrast (wmax - wmin) / (wmax + wmin).
inline double visibility(double wmax, double wmin) {
    detail::require(wmin >= 0.0, "wmin must be nonnegative");
    detail::require(wmax >= wmin, "visibility arguments out of order: wmax < wmin");
    const double sum = wmax + wmin;
    if (sum <= 0.0)
        throw degenerate_input_error("no light detected: flat zero fringe");
    return (wmax - wmin) / sum;
}

/// Selects between the corrected per-detector-2 visibility denominator and
/// the uncorrected one. The uncorrected form collapses its denominator to
/// (1 - l2), independent of the ratio and of l1, and disagrees with direct
/// field propagation whenever l1 != l2; it is kept only for comparison.
enum class V2Form { Corrected, Uncorrected };

namespace detail {

// Geometry-weight / channel-kernel decomposition of one which-way
// measurement: w1 = alpha1*kappa1, w2 = alpha2*kappa2. alpha carries the
// ratio dependence, kappa the per-channel loss/efficiency factors. Keeping
// the two apart is what makes the symmetrization (kernel exchange between
// channels) well defined.
struct ChannelWeights {
    double alpha1, alpha2;
    double kappa1, kappa2;
    double w1() const { return alpha1 * kappa1; }
    double w2() const { return alpha2 * kappa2; }
};

inline std::vector<ChannelWeights> which_way_structure(const ExperimentConfig& cfg,
                                                       SplitRatio ratio) {
    const double r = ratio.value();
    const double u1 = 1.0 - cfg.losses.l1();
    const double u2 = 1.0 - cfg.losses.l2();
    const double q1 = cfg.efficiencies.q1();
    const double q2 = cfg.efficiencies.q2();
    std::vector<ChannelWeights> pairs;
    if (cfg.configuration == Configuration::SplitterVariable) {
        // Arm k of the variable splitter feeds detector k; the channel
        // kernel is the surviving fraction over the efficiency.
        pairs.push_back({1.0 - r, r, u1 / q1, u2 / q2});
    } else if (cfg.loss_placement == LossPlacement::Outside) {
        // Blocked-arm measurements; the surviving beam meets both
        // detector-side filters, so each pair mixes both kernels.
        pairs.push_back({1.0 - r, r, u2 / q2, u1 / q1});
        pairs.push_back({1.0 - r, r, u1 / q1, u2 / q2});
    } else {
        // Losses inside (or absent): the surviving arm's loss factor is
        // common to both channels of its pair.
        pairs.push_back({1.0 - r, r, u2 / q1, u2 / q2});
        pairs.push_back({1.0 - r, r, u1 / q1, u1 / q2});
    }
    return pairs;
}

inline double predictability_from_pairs(const std::vector<ChannelWeights>& pairs) {
    double acc = 0.0;
    for (const auto& pair : pairs) acc += predictability(pair.w1(), pair.w2());
    return acc / static_cast<double>(pairs.size());
}

// Interference visibility with per-arm survival factors a (arm 1) and
// b (arm 2) entering a merger that sends the arm-1 weight share to the
// detector in question.
inline double fringe_visibility(double ratio_to_arm2, double surv1, double surv2,
                                double v0) {
    const double x = (1.0 - ratio_to_arm2) * surv1;
    const double y = ratio_to_arm2 * surv2;
    const double den = x + y;
    if (den <= 0.0)
        throw degenerate_input_error("no light detected: zero fringe denominator");
    return 2.0 * std::sqrt(x * y) / den * v0;
}

inline DualityPoint make_point(double r, double p, double va, double vb, Source src) {
    DualityPoint pt;
    pt.r = r;
    pt.p = clamp01(p);
    pt.v1 = clamp01(va);
    pt.v2 = clamp01(vb);
    pt.duality1 = pt.p * pt.p + pt.v1 * pt.v1;
    pt.duality2 = pt.p * pt.p + pt.v2 * pt.v2;
    pt.source = src;
    return pt;
}

inline void require_case(const ExperimentConfig& cfg, Configuration c, LossPlacement p,
                         const char* name) {
    require(cfg.configuration == c && cfg.loss_placement == p,
            std::string("configuration mismatch for ") + name);
}

}  // namespace detail

/// Variable splitter, losses inside the arms.
/// The loss factors enter both the fringe contrast and the which-way
/// weights, and for equal detector efficiencies and v0 = 1 the duality sum
/// p^2 + v^2 stays exactly 1 for every ratio and every loss pair.
inline DualityPoint config1_inside(const ExperimentConfig& cfg, SplitRatio r) {
    detail::require_case(cfg, Configuration::SplitterVariable, LossPlacement::Inside,
                         "config1_inside");
    const auto pairs = detail::which_way_structure(cfg, r);
    const double p = detail::predictability_from_pairs(pairs);
    const double v = detail::fringe_visibility(r.value(), 1.0 - cfg.losses.l1(),
                                               1.0 - cfg.losses.l2(), cfg.v0);
    return detail::make_point(r.value(), p, v, v, Source::Analytic);
}

/// Variable splitter, losses after the merger. The visibility no longer
/// feels the losses, the which-way weights still do; unbalanced losses can
/// push p^2 + v^2 above 1, up to 2 in the fully blocked limit.
inline DualityPoint config1_outside(const ExperimentConfig& cfg, SplitRatio r) {
    detail::require_case(cfg, Configuration::SplitterVariable, LossPlacement::Outside,
                         "config1_outside");
    const auto pairs = detail::which_way_structure(cfg, r);
    const double p = detail::predictability_from_pairs(pairs);
    const double v = detail::fringe_visibility(r.value(), 1.0, 1.0, cfg.v0);
    return detail::make_point(r.value(), p, v, v, Source::Analytic);
}

/// Per-detector visibilities for the variable-merger, losses-inside case.
inline std::array<double, 2> config2_inside_visibilities(const ExperimentConfig& cfg,
                                                         SplitRatio r,
                                                         V2Form form = V2Form::Corrected) {
    const double u1 = 1.0 - cfg.losses.l1();
    const double u2 = 1.0 - cfg.losses.l2();
    const double rr = r.value();
    const double v1 = detail::fringe_visibility(rr, u1, u2, cfg.v0);
    double v2;
    if (form == V2Form::Corrected) {
        // Detector 2 sees the complementary merger weights, so the mean
        // power in its denominator is r*u1 + (1-r)*u2.
        v2 = detail::fringe_visibility(1.0 - rr, u1, u2, cfg.v0);
    } else {
        const double den = (1.0 - rr) * u2 + rr * u2;
        if (den <= 0.0)
            throw degenerate_input_error("no light detected: zero fringe denominator");
        v2 = 2.0 * std::sqrt(rr * (1.0 - rr) * u1 * u2) / den * cfg.v0;
    }
    return {v1, v2};
}

/// Variable merger, losses inside. The two detectors now report different
/// fringe contrasts, while the which-way weights lose their loss dependence
/// (each blocked-arm pair carries a common loss factor that cancels).
inline DualityPoint config2_inside(const ExperimentConfig& cfg, SplitRatio r) {
    detail::require_case(cfg, Configuration::MergerVariable, LossPlacement::Inside,
                         "config2_inside");
    const auto pairs = detail::which_way_structure(cfg, r);
    const double p = detail::predictability_from_pairs(pairs);
    const auto v = config2_inside_visibilities(cfg, r, V2Form::Corrected);
    return detail::make_point(r.value(), p, v[0], v[1], Source::Analytic);
}

/// Variable merger, losses outside. Visibility is loss-independent, the
/// averaged blocked-arm predictability develops two kinks whose locations
/// depend only on the per-detector kernels.
inline DualityPoint config2_outside(const ExperimentConfig& cfg, SplitRatio r) {
    detail::require_case(cfg, Configuration::MergerVariable, LossPlacement::Outside,
                         "config2_outside");
    const auto pairs = detail::which_way_structure(cfg, r);
    const double p = detail::predictability_from_pairs(pairs);
    const double v = detail::fringe_visibility(r.value(), 1.0, 1.0, cfg.v0);
    return detail::make_point(r.value(), p, v, v, Source::Analytic);
}

/// Closed-form duality point for any configuration/placement combination.
inline DualityPoint evaluate(const ExperimentConfig& cfg, SplitRatio r) {
    const bool splitter_var = cfg.configuration == Configuration::SplitterVariable;
    switch (cfg.loss_placement) {
        case LossPlacement::Inside:
            return splitter_var ? config1_inside(cfg, r) : config2_inside(cfg, r);
        case LossPlacement::Outside:
            return splitter_var ? config1_outside(cfg, r) : config2_outside(cfg, r);
        case LossPlacement::None: {
            // Lossless: both placements coincide; evaluate with the
            // inside-form on zero losses.
            ExperimentConfig inside = cfg;
            inside.loss_placement = LossPlacement::Inside;
            return splitter_var ? config1_inside(inside, r) : config2_inside(inside, r);
        }
    }
    throw std::logic_error("unreachable loss placement");
}

/// Signed arguments of the absolute values inside the predictability, one
/// per which-way pair. A sign change marks a kink of p as a function of any
/// parameter; the fitter uses this to keep finite-difference stencils on one
/// side of a kink.
inline std::vector<double> kink_arguments(const ExperimentConfig& cfg, SplitRatio r) {
    std::vector<double> args;
    for (const auto& pair : detail::which_way_structure(cfg, r))
        args.push_back(pair.w1() - pair.w2());
    return args;
}

/// Ratios at which the blocked-arm predictability terms cross zero for the
/// variable-merger, losses-outside case. Each argument is affine in r with
/// opposite signs at the endpoints, so bisection pins the root to 1e-10.
inline std::array<double, 2> turning_points(const ExperimentConfig& cfg) {
    detail::require_case(cfg, Configuration::MergerVariable, LossPlacement::Outside,
                         "turning_points");
    const auto pairs = detail::which_way_structure(cfg, SplitRatio(0.0));
    std::array<double, 2> roots{};
    for (std::size_t i = 0; i < 2; ++i) {
        const double k1 = pairs[i].kappa1;
        const double k2 = pairs[i].kappa2;
        if (k1 + k2 <= 0.0)
            throw degenerate_input_error("no light detected: both channels dark");
        auto arg = [&](double r) { return (1.0 - r) * k1 - r * k2; };
        double lo = 0.0, hi = 1.0;
        while (hi - lo > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            if (arg(mid) > 0.0)
                lo = mid;
            else
                hi = mid;
        }
        roots[i] = 0.5 * (lo + hi);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

/// How the symmetrized quantity is averaged.
enum class SymmetrizationMode {
    /// Average the original wiring with the wiring that switches the two
    /// paths and the two detectors (the kernel exchange below).
    SwapPathsAndDetectors,
    /// Additionally average over switching the input beam to the other
    /// splitter port. For the variable-splitter configuration this mirrors
    /// the ratio (r -> 1-r); for the variable-merger configuration the input
    /// switch does not alter any detected power, so it adds nothing there.
    SwapPathsDetectorsAndInputPort,
};

/// Path/detector-symmetrized duality point.
///
/// The which-way weights of the original wiring and of the swapped wiring
/// (loss and efficiency kernels exchanged between the two channels) are
/// averaged channel-wise before the predictability is formed, and the
/// visibility is the average of the two wirings' contrasts. The channel
/// averaging leaves a common kernel on both channels, so every loss and
/// efficiency imbalance cancels and p^2 + v^2 <= 1 is restored whenever
/// v0 <= 1.
inline DualityPoint symmetrize(const ExperimentConfig& cfg, SplitRatio r,
                               SymmetrizationMode mode = SymmetrizationMode::SwapPathsAndDetectors) {
    const auto pairs = detail::which_way_structure(cfg, r);
    double p_acc = 0.0;
    for (const auto& pair : pairs) {
        const double kbar = 0.5 * (pair.kappa1 + pair.kappa2);
        double a1 = pair.alpha1, a2 = pair.alpha2;
        if (mode == SymmetrizationMode::SwapPathsDetectorsAndInputPort &&
            cfg.configuration == Configuration::SplitterVariable) {
            a1 = 0.5 * (pair.alpha1 + pair.alpha2);
            a2 = a1;
        }
        p_acc += predictability(a1 * kbar, a2 * kbar);
    }
    const double p = p_acc / static_cast<double>(pairs.size());

    auto wiring_visibility = [&](const ExperimentConfig& c) {
        switch (c.loss_placement) {
            case LossPlacement::Inside:
                return detail::fringe_visibility(r.value(), 1.0 - c.losses.l1(),
                                                 1.0 - c.losses.l2(), c.v0);
            default:
                return detail::fringe_visibility(r.value(), 1.0, 1.0, c.v0);
        }
    };
    double v = 0.5 * (wiring_visibility(cfg) + wiring_visibility(cfg.swapped()));
    if (mode == SymmetrizationMode::SwapPathsDetectorsAndInputPort &&
        cfg.configuration == Configuration::SplitterVariable) {
        SplitRatio mirrored(1.0 - r.value());
        auto mirrored_visibility = [&](const ExperimentConfig& c) {
            switch (c.loss_placement) {
                case LossPlacement::Inside:
                    return detail::fringe_visibility(mirrored.value(), 1.0 - c.losses.l1(),
                                                     1.0 - c.losses.l2(), c.v0);
                default:
                    return detail::fringe_visibility(mirrored.value(), 1.0, 1.0, c.v0);
            }
        };
        v = 0.5 * (v + 0.5 * (mirrored_visibility(cfg) + mirrored_visibility(cfg.swapped())));
    }
    return detail::make_point(r.value(), p, v, v, Source::Analytic);
}

}  // namespace mzi
