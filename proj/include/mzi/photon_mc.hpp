#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mzi/analytic.hpp"
#include "mzi/common.hpp"
#include "mzi/protocols.hpp"
#include "mzi/rng.hpp"

namespace mzi {

/// Per-photon outcome probabilities of one pipeline setting. These are the
/// detected intensities of a unit-power coherent beam read as probabilities,
/// which is exactly the equivalence this module exists to check by sampling.
struct OutcomeDistribution {
    double p_det1 = 0.0;
    double p_det2 = 0.0;
    double p_lost = 0.0;
    ExperimentConfig config;
    double r = 0.0;
    double phi = 0.0;
};

inline OutcomeDistribution make_distribution(const ExperimentConfig& cfg, SplitRatio r,
                                             double phi, Block block) {
    const PipelineSample s = propagate_sample(cfg, r, phi, block);
    OutcomeDistribution dist;
    dist.p_det1 = s.i1;
    dist.p_det2 = s.i2;
    dist.p_lost = std::max(0.0, 1.0 - s.i1 - s.i2);
    dist.config = cfg;
    dist.r = r.value();
    dist.phi = phi;
    return dist;
}

/// Outcome probabilities of the fringe pipeline at phase phi.
inline OutcomeDistribution outcome_probabilities(const ExperimentConfig& cfg, SplitRatio r,
                                                 double phi) {
    return make_distribution(cfg, r, phi, Block::None);
}

/// Tallies of independent single-photon runs.
struct CountRecord {
    std::uint64_t n_det1 = 0;
    std::uint64_t n_det2 = 0;
    std::uint64_t n_lost = 0;
    std::uint64_t n_total = 0;
    std::uint64_t seed = 0;
};

/// n independent three-way categorical draws from the outcome distribution.
inline CountRecord simulate_counts(const OutcomeDistribution& dist, std::uint64_t n,
                                   std::uint64_t seed) {
    detail::require(n >= 1, "photon count must be at least 1");
    const double c1 = dist.p_det1;
    const double c2 = dist.p_det1 + dist.p_det2;
    rng::Stream stream(seed);
    CountRecord rec;
    rec.n_total = n;
    rec.seed = seed;
    for (std::uint64_t i = 0; i < n; ++i) {
        const double u = stream.next_unit();
        if (u < c1)
            ++rec.n_det1;
        else if (u < c2)
            ++rec.n_det2;
        else
            ++rec.n_lost;
    }
    return rec;
}

/// A Monte Carlo duality estimate with delta-method standard errors.
struct McDualityPoint {
    DualityPoint point;
    double se_p = 0.0;
    double se_v1 = 0.0;
    double se_v2 = 0.0;
    std::uint64_t n_per_phase = 0;
    int n_phases = 0;
    std::uint64_t seed = 0;
};

namespace detail {

struct RateSeries {
    std::vector<double> phases;
    std::vector<double> rates;
    std::vector<double> variances;  // binomial, per sample
};

struct VisibilityWithError {
    double v = 0.0;
    double se = 0.0;
};

// Sinusoid fit on count rates plus error propagation. The phase grid is
// uniform over a full period, so the design columns are orthogonal and the
// coefficient variances reduce to weighted sums of the per-sample variances.
inline VisibilityWithError visibility_from_rates(const RateSeries& series) {
    const SinusoidFit fit = fit_sinusoid(series.phases, series.rates);
    const std::size_t m = series.phases.size();
    double var_offset = 0.0, var_cos = 0.0, var_sin = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double c = std::cos(series.phases[j]);
        const double s = std::sin(series.phases[j]);
        var_offset += series.variances[j];
        var_cos += series.variances[j] * c * c;
        var_sin += series.variances[j] * s * s;
    }
    const double md = static_cast<double>(m);
    var_offset /= md * md;
    var_cos *= 4.0 / (md * md);
    var_sin *= 4.0 / (md * md);

    VisibilityWithError out;
    if (fit.offset <= 0.0) return out;
    const double a = fit.offset;
    const double b = fit.amplitude;
    if (b < 1e-12) {
        out.v = 0.0;
        out.se = std::sqrt(var_cos + var_sin) / a;
        return out;
    }
    const double p = b * std::cos(fit.phase);
    const double q = -b * std::sin(fit.phase);
    const double dv_dp = p / (b * a);
    const double dv_dq = q / (b * a);
    const double dv_da = -b / (a * a);
    out.v = clamp01(b / a);
    out.se = std::sqrt(dv_dp * dv_dp * var_cos + dv_dq * dv_dq * var_sin +
                       dv_da * dv_da * var_offset);
    return out;
}

struct PredictabilityWithError {
    double p = 0.0;
    double se = 0.0;
};

inline PredictabilityWithError counted_predictability(const ExperimentConfig& cfg,
                                                      const CountRecord& rec) {
    const double n = static_cast<double>(rec.n_total);
    const double y1 = static_cast<double>(rec.n_det1) / n;
    const double y2 = static_cast<double>(rec.n_det2) / n;
    const double q1 = cfg.efficiencies.q1();
    const double q2 = cfg.efficiencies.q2();
    const double w1 = y1 / (q1 * q1);
    const double w2 = y2 / (q2 * q2);
    const double sum = w1 + w2;
    if (sum <= 0.0)
        throw degenerate_input_error("no photons detected in which-way run");
    const double var_w1 = y1 * (1.0 - y1) / n / (q1 * q1 * q1 * q1);
    const double var_w2 = y2 * (1.0 - y2) / n / (q2 * q2 * q2 * q2);
    PredictabilityWithError out;
    out.p = std::abs(w1 - w2) / sum;
    const double d1 = 2.0 * w2 / (sum * sum);
    const double d2 = 2.0 * w1 / (sum * sum);
    out.se = std::sqrt(d1 * d1 * var_w1 + d2 * d2 * var_w2);
    return out;
}

}  // namespace detail

/// Single-photon estimate of the duality quantities: fringe counting at
/// n_phases settings for the visibilities, which-way counting for the
/// predictability. Streams derive from (seed, phase index) and
/// (seed, n_phases + run index), so the estimate is reproducible and the
/// per-phase work could run in any order or in parallel.
inline McDualityPoint estimate_duality(const ExperimentConfig& cfg, SplitRatio r,
                                       std::uint64_t n_per_phase, int n_phases,
                                       std::uint64_t seed) {
    detail::require(n_per_phase >= 10000, "need at least 1e4 photons per phase");
    detail::require(n_phases >= 8, "need at least 8 phase settings");

    const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
    detail::RateSeries det1, det2;
    for (int k = 0; k < n_phases; ++k) {
        const double phi = two_pi * static_cast<double>(k) / static_cast<double>(n_phases);
        const OutcomeDistribution dist = outcome_probabilities(cfg, r, phi);
        const CountRecord rec = simulate_counts(dist, n_per_phase, rng::derive_seed(seed, k));
        const double n = static_cast<double>(n_per_phase);
        const double y1 = static_cast<double>(rec.n_det1) / n;
        const double y2 = static_cast<double>(rec.n_det2) / n;
        det1.phases.push_back(phi);
        det1.rates.push_back(y1);
        det1.variances.push_back(y1 * (1.0 - y1) / n);
        det2.phases.push_back(phi);
        det2.rates.push_back(y2);
        det2.variances.push_back(y2 * (1.0 - y2) / n);
    }
    const auto vis1 = detail::visibility_from_rates(det1);
    const auto vis2 = detail::visibility_from_rates(det2);

    std::vector<Block> runs;
    if (cfg.configuration == Configuration::SplitterVariable)
        runs = {Block::BypassMerger};
    else
        runs = {Block::Arm1, Block::Arm2};
    double p_acc = 0.0, var_acc = 0.0;
    for (std::size_t j = 0; j < runs.size(); ++j) {
        const OutcomeDistribution dist = make_distribution(cfg, r, 0.0, runs[j]);
        const CountRecord rec = simulate_counts(
            dist, n_per_phase, rng::derive_seed(seed, static_cast<std::uint64_t>(n_phases) + j));
        const auto pe = detail::counted_predictability(cfg, rec);
        p_acc += pe.p;
        var_acc += pe.se * pe.se;
    }
    const double nruns = static_cast<double>(runs.size());
    const double p = p_acc / nruns;
    const double se_p = std::sqrt(var_acc) / nruns;

    McDualityPoint out;
    out.point = detail::make_point(r.value(), p, vis1.v, vis2.v, Source::MonteCarlo);
    out.se_p = se_p;
    out.se_v1 = vis1.se;
    out.se_v2 = vis2.se;
    out.n_per_phase = n_per_phase;
    out.n_phases = n_phases;
    out.seed = seed;
    return out;
}

}  // namespace mzi
