#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mzi/analytic.hpp"
#include "mzi/common.hpp"
#include "mzi/optics.hpp"
#include "mzi/rng.hpp"

namespace mzi {

/// Optional modification of the element pipeline for which-way measurements.
enum class Block {
    None,
    Arm1,          // opaque screen in arm 1, inserted after the splitter
    Arm2,          // opaque screen in arm 2
    BypassMerger,  // route each arm straight to its own detector
};

/// Detected intensities of one pipeline evaluation plus the power absorbed
/// along the way (losses, blocks, filter and detector deficits). For a unit
/// input, i1 + i2 + absorbed reconstructs the input power.
struct PipelineSample {
    double i1 = 0.0;
    double i2 = 0.0;
    double absorbed = 0.0;
};

/// Propagates a unit-power beam through the configured interferometer at
/// relative phase phi and reads out both detectors.
inline PipelineSample propagate_sample(const ExperimentConfig& cfg, SplitRatio r, double phi,
                                       Block block = Block::None) {
    const bool splitter_var = cfg.configuration == Configuration::SplitterVariable;
    TwoModeField field(1.0, 0.0, cfg.v0);
    double absorbed = 0.0;

    field = apply_splitter(field, splitter_var ? r : SplitRatio(0.5));
    if (cfg.loss_placement == LossPlacement::Inside) {
        absorbed += cfg.losses.l1() * std::norm(field.amp1) +
                    cfg.losses.l2() * std::norm(field.amp2);
        field = apply_loss(field, cfg.losses);
    }
    if (block == Block::Arm1) {
        absorbed += std::norm(field.amp1);
        field.amp1 = 0.0;
    } else if (block == Block::Arm2) {
        absorbed += std::norm(field.amp2);
        field.amp2 = 0.0;
    }
    field = apply_phase(field, phi);

    const SplitRatio merge = block == Block::BypassMerger
                                 ? SplitRatio(0.0)
                                 : (splitter_var ? SplitRatio(0.5) : r);
    Readings raw = merge_and_detect(field, merge, DetectorPair(1.0, 1.0));
    if (cfg.loss_placement == LossPlacement::Outside) {
        absorbed += cfg.losses.l1() * raw.i1 + cfg.losses.l2() * raw.i2;
        raw.i1 *= 1.0 - cfg.losses.l1();
        raw.i2 *= 1.0 - cfg.losses.l2();
    }
    PipelineSample out;
    out.i1 = cfg.efficiencies.q1() * raw.i1;
    out.i2 = cfg.efficiencies.q2() * raw.i2;
    out.absorbed = absorbed + (1.0 - cfg.efficiencies.q1()) * raw.i1 +
                   (1.0 - cfg.efficiencies.q2()) * raw.i2;
    return out;
}

/// One phase scan over [0, 2pi): sampled phases with both detector signals.
struct FringeScan {
    std::vector<double> phases;
    std::vector<double> i1;
    std::vector<double> i2;
    ExperimentConfig config;
    double r = 0.0;
};

/// Runs a phase scan with n uniformly spaced samples (n >= 16).
inline FringeScan run_fringe_scan(const ExperimentConfig& cfg, SplitRatio r, int n = 256) {
    detail::require(n >= 16, "fringe scan needs at least 16 samples");
    FringeScan scan;
    scan.config = cfg;
    scan.r = r.value();
    scan.phases.reserve(n);
    scan.i1.reserve(n);
    scan.i2.reserve(n);
    const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
    double signal = 0.0;
    for (int j = 0; j < n; ++j) {
        const double phi = two_pi * static_cast<double>(j) / static_cast<double>(n);
        const PipelineSample s = propagate_sample(cfg, r, phi);
        scan.phases.push_back(phi);
        scan.i1.push_back(s.i1);
        scan.i2.push_back(s.i2);
        signal += s.i1 + s.i2;
    }
    if (signal <= 0.0)
        throw degenerate_input_error("no light detected: both detector signals are zero");
    return scan;
}

/// Least-squares parameters of y = offset + amplitude * cos(phi + phase).
struct SinusoidFit {
    double offset = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;
};

/// Linear least squares on the basis {1, cos, sin}; exact for noiseless
/// fringes on any phase grid, robust on noisy ones.
inline SinusoidFit fit_sinusoid(const std::vector<double>& phases,
                                const std::vector<double>& values) {
    detail::require(phases.size() == values.size() && phases.size() >= 3,
                    "sinusoid fit needs matching vectors of at least 3 samples");
    double a[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double b[3] = {0, 0, 0};
    for (std::size_t i = 0; i < phases.size(); ++i) {
        const double basis[3] = {1.0, std::cos(phases[i]), std::sin(phases[i])};
        for (int row = 0; row < 3; ++row) {
            b[row] += values[i] * basis[row];
            for (int col = 0; col < 3; ++col) a[row][col] += basis[row] * basis[col];
        }
    }
    // 3x3 Gaussian elimination with partial pivoting
    int order[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(a[order[row]][col]) > std::abs(a[order[pivot]][col])) pivot = row;
        std::swap(order[col], order[pivot]);
        const double diag = a[order[col]][col];
        detail::require(std::abs(diag) > 1e-30, "degenerate phase grid in sinusoid fit");
        for (int row = col + 1; row < 3; ++row) {
            const double f = a[order[row]][col] / diag;
            for (int k = col; k < 3; ++k) a[order[row]][k] -= f * a[order[col]][k];
            b[order[row]] -= f * b[order[col]];
        }
    }
    double beta[3];
    for (int col = 2; col >= 0; --col) {
        double acc = b[order[col]];
        for (int k = col + 1; k < 3; ++k) acc -= a[order[col]][k] * beta[k];
        beta[col] = acc / a[order[col]][col];
    }
    SinusoidFit fit;
    fit.offset = beta[0];
    fit.amplitude = std::hypot(beta[1], beta[2]);
    fit.phase = std::atan2(-beta[2], beta[1]);
    return fit;
}

/// Per-detector fringe visibilities.
struct VisibilityEstimate {
    double v1 = 0.0;
    double v2 = 0.0;
};

namespace detail {

inline double visibility_from_fit(const SinusoidFit& fit) {
    // Flat signal (including a dark detector) reads as zero contrast.
    if (fit.amplitude < 1e-12 || fit.offset <= 0.0) return 0.0;
    return clamp01(fit.amplitude / fit.offset);
}

}  // namespace detail

/// Visibility of each detector signal from the sinusoid fit.
inline VisibilityEstimate extract_visibility(const FringeScan& scan) {
    VisibilityEstimate out;
    out.v1 = detail::visibility_from_fit(fit_sinusoid(scan.phases, scan.i1));
    out.v2 = detail::visibility_from_fit(fit_sinusoid(scan.phases, scan.i2));
    return out;
}

/// Visibility of each detector signal from the sample extrema. Used to
/// cross-check the fit route; the two agree on noiseless scans.
inline VisibilityEstimate extract_visibility_extrema(const FringeScan& scan) {
    auto contrast = [](const std::vector<double>& y) {
        double lo = y[0], hi = y[0];
        for (double v : y) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= 0.0 || hi - lo < 1e-12) return 0.0;
        return detail::clamp01((hi - lo) / (hi + lo));
    };
    return {contrast(scan.i1), contrast(scan.i2)};
}

/// One which-way measurement: efficiency-corrected channel weights.
struct WeightPair {
    double w1 = 0.0;
    double w2 = 0.0;
};

namespace detail {

// Raw detector readings of the which-way runs, before the efficiency
// correction; one entry per run (one run for the variable-splitter wiring,
// two blocked-arm runs for the variable-merger wiring).
inline std::vector<PipelineSample> which_way_raw(const ExperimentConfig& cfg, SplitRatio r) {
    std::vector<PipelineSample> runs;
    if (cfg.configuration == Configuration::SplitterVariable) {
        runs.push_back(propagate_sample(cfg, r, 0.0, Block::BypassMerger));
    } else {
        runs.push_back(propagate_sample(cfg, r, 0.0, Block::Arm1));
        runs.push_back(propagate_sample(cfg, r, 0.0, Block::Arm2));
    }
    return runs;
}

// Each reading is divided by the square of its detector's efficiency: one
// factor undoes the physical detection efficiency, the second applies the
// efficiency division built into the closed-form weights.
inline WeightPair correct_weights(const PipelineSample& run, const DetectorPair& q) {
    WeightPair pair;
    pair.w1 = run.i1 / (q.q1() * q.q1());
    pair.w2 = run.i2 / (q.q2() * q.q2());
    if (pair.w1 + pair.w2 <= 0.0)
        throw degenerate_input_error("no light detected in which-way run");
    return pair;
}

}  // namespace detail

/// Simulated which-way measurement. The variable-splitter wiring bypasses
/// the merger so each arm lands on its own detector; the variable-merger
/// wiring blocks one arm at a time and reads both detectors.
inline std::vector<WeightPair> measure_which_way(const ExperimentConfig& cfg, SplitRatio r) {
    std::vector<WeightPair> pairs;
    for (const auto& run : detail::which_way_raw(cfg, r))
        pairs.push_back(detail::correct_weights(run, cfg.efficiencies));
    return pairs;
}

/// Predictability from measured which-way weights (averaged over runs).
inline double protocol_predictability(const std::vector<WeightPair>& pairs) {
    detail::require(!pairs.empty(), "no which-way runs");
    double acc = 0.0;
    for (const auto& pair : pairs) acc += predictability(pair.w1, pair.w2);
    return acc / static_cast<double>(pairs.size());
}

/// Multiplicative Gaussian intensity noise, truncated at zero.
struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

/// A sweep over the ratio grid with its provenance.
struct SweepDataset {
    std::vector<DualityPoint> points;
    ExperimentConfig config;
    std::vector<double> requested_grid;
    std::optional<NoiseSpec> noise;
    std::vector<double> skipped_r;  // grid points whose evaluation was degenerate
};

namespace detail {

inline double perturb(double intensity, double sigma, rng::Stream& stream) {
    const double factor = 1.0 + sigma * stream.next_normal();
    return std::max(0.0, intensity * factor);
}

// Noise draw order per grid point: fringe samples in phase order (detector 1
// then detector 2 within a sample), then the which-way readings run by run.
inline DualityPoint protocol_point(const ExperimentConfig& cfg, SplitRatio r, int n_phases,
                                   double sigma, rng::Stream* stream) {
    FringeScan scan = run_fringe_scan(cfg, r, n_phases);
    if (stream != nullptr) {
        for (std::size_t j = 0; j < scan.phases.size(); ++j) {
            scan.i1[j] = perturb(scan.i1[j], sigma, *stream);
            scan.i2[j] = perturb(scan.i2[j], sigma, *stream);
        }
    }
    const VisibilityEstimate vis = extract_visibility(scan);

    std::vector<WeightPair> pairs;
    for (auto run : which_way_raw(cfg, r)) {
        if (stream != nullptr) {
            run.i1 = perturb(run.i1, sigma, *stream);
            run.i2 = perturb(run.i2, sigma, *stream);
        }
        pairs.push_back(correct_weights(run, cfg.efficiencies));
    }
    double acc = 0.0;
    for (const auto& pair : pairs) acc += predictability(pair.w1, pair.w2);
    const double p = acc / static_cast<double>(pairs.size());
    return make_point(r.value(), p, vis.v1, vis.v2, Source::Protocol);
}

}  // namespace detail

/// Protocol duality point: fringe-scan visibility plus which-way
/// predictability, both simulated through the element pipeline.
inline DualityPoint protocol_duality_point(const ExperimentConfig& cfg, SplitRatio r,
                                           int n_phases = 256) {
    return detail::protocol_point(cfg, r, n_phases, 0.0, nullptr);
}

/// Runs the measurement protocol over a ratio grid. Degenerate grid points
/// are skipped and recorded, not fatal. With a NoiseSpec, every intensity is
/// perturbed multiplicatively; the per-point noise streams are derived from
/// (seed, point index), so reruns and any evaluation order reproduce the
/// dataset bit-exactly.
inline SweepDataset duality_sweep(const ExperimentConfig& cfg, const std::vector<double>& r_grid,
                                  int n_phases = 256,
                                  std::optional<NoiseSpec> noise = std::nullopt) {
    detail::require(!r_grid.empty(), "empty ratio grid");
    for (std::size_t i = 1; i < r_grid.size(); ++i)
        detail::require(r_grid[i] > r_grid[i - 1], "ratio grid must be strictly increasing");
    if (noise) detail::require(noise->sigma >= 0.0, "noise sigma must be nonnegative");

    SweepDataset ds;
    ds.config = cfg;
    ds.requested_grid = r_grid;
    ds.noise = noise;
    for (std::size_t i = 0; i < r_grid.size(); ++i) {
        const SplitRatio r(r_grid[i]);
        try {
            if (noise && noise->sigma > 0.0) {
                rng::Stream stream(rng::derive_seed(noise->seed, i));
                ds.points.push_back(
                    detail::protocol_point(cfg, r, n_phases, noise->sigma, &stream));
            } else {
                ds.points.push_back(detail::protocol_point(cfg, r, n_phases, 0.0, nullptr));
            }
        } catch (const degenerate_input_error&) {
            ds.skipped_r.push_back(r_grid[i]);
        }
    }
    return ds;
}

/// Closed-form sweep over the same grid, for curve output and as the
/// reference in protocol/analytic comparisons.
inline SweepDataset analytic_sweep(const ExperimentConfig& cfg,
                                   const std::vector<double>& r_grid) {
    detail::require(!r_grid.empty(), "empty ratio grid");
    SweepDataset ds;
    ds.config = cfg;
    ds.requested_grid = r_grid;
    for (double r : r_grid) {
        try {
            ds.points.push_back(evaluate(cfg, SplitRatio(r)));
        } catch (const degenerate_input_error&) {
            ds.skipped_r.push_back(r);
        }
    }
    return ds;
}

}  // namespace mzi
