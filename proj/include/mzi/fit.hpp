#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mzi/analytic.hpp"
#include "mzi/common.hpp"

namespace mzi {

/// Which closed-form evaluator the data are fitted against.
enum class ModelKind { Config1Inside, Config1Outside, Config2Inside, Config2Outside };

/// Fittable parameters, in the fixed order used throughout this module.
enum ParamIndex : int { kParamL1 = 0, kParamL2, kParamV0, kParamQ1, kParamQ2, kParamCount };

inline const char* param_name(int index) {
    static const char* names[kParamCount] = {"L1", "L2", "V0", "Q1", "Q2"};
    return names[index];
}

struct ParamSpec {
    double value = 0.0;
    double lower = 0.0;
    double upper = 1.0;
    bool free = false;
};

/// Physical defaults: lossless, ideal instrument, with bounds inside the
/// physical ranges (losses strictly below 1, efficiencies strictly above 0).
inline std::array<ParamSpec, kParamCount> default_param_specs() {
    std::array<ParamSpec, kParamCount> p{};
    p[kParamL1] = {0.0, 0.0, 0.995, false};
    p[kParamL2] = {0.0, 0.0, 0.995, false};
    p[kParamV0] = {1.0, 0.0, 1.0, false};
    p[kParamQ1] = {1.0, 0.05, 1.0, false};
    p[kParamQ2] = {1.0, 0.05, 1.0, false};
    return p;
}

/// Dataset plus model selection and the free/fixed parameter split.
struct FitProblem {
    std::vector<DualityPoint> data;
    ModelKind model = ModelKind::Config1Inside;
    std::array<ParamSpec, kParamCount> params = default_param_specs();
    // Which squared quantities enter the residual vector.
    bool use_p = true;
    bool use_v = true;
    int max_iterations = 500;
};

inline ExperimentConfig config_for(ModelKind model, const std::array<double, kParamCount>& x) {
    const Configuration c = (model == ModelKind::Config1Inside || model == ModelKind::Config1Outside)
                                ? Configuration::SplitterVariable
                                : Configuration::MergerVariable;
    const LossPlacement p = (model == ModelKind::Config1Inside || model == ModelKind::Config2Inside)
                                ? LossPlacement::Inside
                                : LossPlacement::Outside;
    return {c, p, LossPair(x[kParamL1], x[kParamL2]), DetectorPair(x[kParamQ1], x[kParamQ2]),
            x[kParamV0]};
}

/// Residual vector: (model - data) over the squared quantities p^2 and v^2
/// (both per-detector v^2 for the variable-merger losses-inside model) at
/// every grid ratio. Points whose model evaluation is degenerate contribute
/// zeros and are counted in `excluded`, so the vector shape is stable.
struct ResidualReport {
    std::vector<double> values;
    int excluded = 0;
};

inline ResidualReport residuals(const FitProblem& problem,
                                const std::array<double, kParamCount>& x) {
    detail::require(!problem.data.empty(), "empty dataset");
    const ExperimentConfig cfg = config_for(problem.model, x);
    const bool two_vis = problem.model == ModelKind::Config2Inside;

    // Evaluation order is fixed by ratio, not by dataset order, so permuting
    // the input points cannot change any accumulated sum.
    std::vector<std::size_t> order(problem.data.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return problem.data[a].r < problem.data[b].r;
    });

    ResidualReport report;
    for (std::size_t idx : order) {
        const DualityPoint& d = problem.data[idx];
        double mp2 = 0.0, mv12 = 0.0, mv22 = 0.0;
        bool ok = true;
        try {
            const DualityPoint m = evaluate(cfg, SplitRatio(d.r));
            mp2 = m.p * m.p;
            mv12 = m.v1 * m.v1;
            mv22 = m.v2 * m.v2;
        } catch (const degenerate_input_error&) {
            ok = false;
            ++report.excluded;
        }
        if (problem.use_p) report.values.push_back(ok ? mp2 - d.p * d.p : 0.0);
        if (problem.use_v) {
            report.values.push_back(ok ? mv12 - d.v1 * d.v1 : 0.0);
            if (two_vis) report.values.push_back(ok ? mv22 - d.v2 * d.v2 : 0.0);
        }
    }
    detail::require(!report.values.empty(), "no residual components selected");
    return report;
}

namespace detail {

inline double norm2(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

// Dense k x k solve, Gaussian elimination with partial pivoting.
inline bool solve_dense(std::vector<double>& a, std::vector<double>& b, int k) {
    for (int col = 0; col < k; ++col) {
        int pivot = col;
        for (int row = col + 1; row < k; ++row)
            if (std::abs(a[row * k + col]) > std::abs(a[pivot * k + col])) pivot = row;
        if (std::abs(a[pivot * k + col]) < 1e-300) return false;
        if (pivot != col) {
            for (int j = 0; j < k; ++j) std::swap(a[col * k + j], a[pivot * k + j]);
            std::swap(b[col], b[pivot]);
        }
        for (int row = col + 1; row < k; ++row) {
            const double f = a[row * k + col] / a[col * k + col];
            for (int j = col; j < k; ++j) a[row * k + j] -= f * a[col * k + j];
            b[row] -= f * b[col];
        }
    }
    for (int col = k - 1; col >= 0; --col) {
        double acc = b[col];
        for (int j = col + 1; j < k; ++j) acc -= a[col * k + j] * b[j];
        b[col] = acc / a[col * k + col];
    }
    return true;
}

// Inverse via repeated solves; returns false on singularity.
inline bool invert_dense(const std::vector<double>& a, std::vector<double>& inv, int k) {
    inv.assign(k * k, 0.0);
    for (int col = 0; col < k; ++col) {
        std::vector<double> lu = a;
        std::vector<double> e(k, 0.0);
        e[col] = 1.0;
        if (!solve_dense(lu, e, k)) return false;
        for (int row = 0; row < k; ++row) inv[row * k + col] = e[row];
    }
    return true;
}

inline bool kink_sign_change(const FitProblem& problem,
                             const std::array<double, kParamCount>& lo,
                             const std::array<double, kParamCount>& hi) {
    const ExperimentConfig cl = config_for(problem.model, lo);
    const ExperimentConfig ch = config_for(problem.model, hi);
    for (const DualityPoint& d : problem.data) {
        const auto a = kink_arguments(cl, SplitRatio(d.r));
        const auto b = kink_arguments(ch, SplitRatio(d.r));
        for (std::size_t i = 0; i < a.size(); ++i)
            if ((a[i] > 0.0) != (b[i] > 0.0)) return true;
    }
    return false;
}

}  // namespace detail

/// Central-difference Jacobian of the residual vector with respect to the
/// free parameters, flattened row-major (m x k). Steps that would straddle a
/// kink of |.| (detected by a sign change of its argument) are shrunk by 10,
/// up to three times, before differencing.
inline std::vector<double> fd_jacobian(const FitProblem& problem,
                                       const std::array<double, kParamCount>& x,
                                       const std::vector<int>& free_indices,
                                       double relative_step = 1e-6) {
    const std::size_t m = residuals(problem, x).values.size();
    const int k = static_cast<int>(free_indices.size());
    std::vector<double> jac(m * k, 0.0);
    for (int j = 0; j < k; ++j) {
        const int pi = free_indices[j];
        double h = relative_step * std::max(1.0, std::abs(x[pi]));
        const double lo_bound = problem.params[pi].lower;
        const double hi_bound = problem.params[pi].upper;
        std::array<double, kParamCount> xp = x, xm = x;
        for (int attempt = 0; attempt < 4; ++attempt) {
            xp[pi] = std::min(x[pi] + h, hi_bound);
            xm[pi] = std::max(x[pi] - h, lo_bound);
            if (attempt == 3 || !detail::kink_sign_change(problem, xm, xp)) break;
            h *= 0.1;
        }
        const double spread = xp[pi] - xm[pi];
        if (spread <= 0.0) continue;  // parameter pinned at a bound corner
        const auto rp = residuals(problem, xp).values;
        const auto rm = residuals(problem, xm).values;
        for (std::size_t row = 0; row < m; ++row)
            jac[row * k + j] = (rp[row] - rm[row]) / spread;
    }
    return jac;
}

/// Outcome of a fit. Estimates carry all five parameters (fixed ones echoed
/// back); the covariance is over the free subset, row-major. A singular
/// normal-equations matrix marks non-identifiable parameters with infinite
/// covariance entries rather than inventing finite errors.
struct FitResult {
    std::array<double, kParamCount> estimates{};
    std::vector<int> free_indices;
    std::vector<double> covariance;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    int excluded_points = 0;
    int start_index = 0;
    std::string message;
};

namespace detail {

struct StartOutcome {
    std::array<double, kParamCount> x{};
    double norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    int excluded = 0;
};

inline StartOutcome run_start(const FitProblem& problem, const std::vector<int>& free_indices,
                              std::array<double, kParamCount> x) {
    StartOutcome out;
    const int k = static_cast<int>(free_indices.size());
    ResidualReport rep = residuals(problem, x);
    double norm = norm2(rep.values);
    double lambda = 1e-3;
    int iter = 0;
    int stalled = 0;
    for (; iter < problem.max_iterations; ++iter) {
        const auto jac = fd_jacobian(problem, x, free_indices);
        const std::size_t m = rep.values.size();
        std::vector<double> jtj(k * k, 0.0), jtr(k, 0.0);
        for (std::size_t row = 0; row < m; ++row) {
            for (int a = 0; a < k; ++a) {
                jtr[a] += jac[row * k + a] * rep.values[row];
                for (int b = a; b < k; ++b) jtj[a * k + b] += jac[row * k + a] * jac[row * k + b];
            }
        }
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < a; ++b) jtj[a * k + b] = jtj[b * k + a];

        std::vector<double> damped = jtj, step(k);
        for (int a = 0; a < k; ++a) {
            const double d = std::max(jtj[a * k + a], 1e-14);
            damped[a * k + a] += lambda * d;
        }
        for (int a = 0; a < k; ++a) step[a] = -jtr[a];
        if (!solve_dense(damped, step, k)) {
            lambda = std::min(lambda * 10.0, 1e12);
            if (++stalled > 30) break;
            continue;
        }
        double step_norm = 0.0;
        std::array<double, kParamCount> xn = x;
        for (int a = 0; a < k; ++a) {
            const int pi = free_indices[a];
            xn[pi] = std::clamp(x[pi] + step[a], problem.params[pi].lower,
                                problem.params[pi].upper);
            const double moved = xn[pi] - x[pi];
            step_norm += moved * moved;
        }
        step_norm = std::sqrt(step_norm);
        if (step_norm < 1e-12) {
            // Stationary under the damping: nothing left to move.
            out.converged = true;
            break;
        }
        ResidualReport repn = residuals(problem, xn);
        const double norm_new = norm2(repn.values);
        if (norm_new < norm) {
            const double rel_change = (norm - norm_new) / std::max(norm, 1e-300);
            x = xn;
            rep = std::move(repn);
            norm = norm_new;
            lambda = std::max(lambda / 10.0, 1e-12);
            stalled = 0;
            if (rel_change < 1e-10) {
                out.converged = true;
                ++iter;
                break;
            }
        } else {
            lambda = std::min(lambda * 10.0, 1e12);
            if (++stalled > 30) break;  // rejected repeatedly at max damping
        }
    }
    out.x = x;
    out.norm = norm;
    out.iterations = iter;
    out.excluded = rep.excluded;
    return out;
}

}  // namespace detail

/// Damped least squares over the free parameters with bound projection.
///
/// Five deterministic starts (bound-range fractions 0.5, 0.25, 0.75, 0.1,
/// 0.9, midpoint first) guard against the flat regions around the
/// predictability kinks; the start with the lowest final residual norm wins,
/// ties broken by start order. Steps are accepted only when the residual
/// norm decreases; the damping factor shrinks tenfold on acceptance and
/// grows tenfold on rejection. Convergence means a relative residual-norm
/// change below 1e-10 or a step shorter than 1e-12; anything still moving
/// after 500 iterations is reported as non-converged, never as an answer.
inline FitResult fit(const FitProblem& problem) {
    for (int i = 0; i < kParamCount; ++i) {
        const auto& spec = problem.params[i];
        detail::require(spec.lower <= spec.upper, "empty parameter bounds");
        detail::require(spec.value >= spec.lower && spec.value <= spec.upper,
                        std::string(param_name(i)) + " value outside its bounds");
        if (i == kParamL1 || i == kParamL2)
            detail::require(spec.lower >= 0.0 && spec.upper < 1.0,
                            "loss bounds must lie in [0, 1)");
        else if (i == kParamV0)
            detail::require(spec.lower >= 0.0 && spec.upper <= 1.0,
                            "v0 bounds must lie in [0, 1]");
        else
            detail::require(spec.lower > 0.0 && spec.upper <= 1.0,
                            "efficiency bounds must lie in (0, 1]");
    }
    std::vector<int> free_indices;
    for (int i = 0; i < kParamCount; ++i)
        if (problem.params[i].free) free_indices.push_back(i);
    detail::require(!free_indices.empty(), "no free parameters");

    std::array<double, kParamCount> base{};
    for (int i = 0; i < kParamCount; ++i) base[i] = problem.params[i].value;
    const std::size_t m = residuals(problem, base).values.size();
    detail::require(m >= free_indices.size(), "under-determined fit problem");

    const double start_fractions[5] = {0.5, 0.25, 0.75, 0.1, 0.9};
    detail::StartOutcome best;
    int best_start = -1;
    for (int s = 0; s < 5; ++s) {
        std::array<double, kParamCount> x = base;
        for (int pi : free_indices) {
            const auto& spec = problem.params[pi];
            x[pi] = spec.lower + start_fractions[s] * (spec.upper - spec.lower);
        }
        const auto outcome = detail::run_start(problem, free_indices, x);
        if (outcome.norm < best.norm) {
            best = outcome;
            best_start = s;
        }
    }

    FitResult result;
    result.estimates = best.x;
    result.free_indices = free_indices;
    result.residual_norm = best.norm;
    result.iterations = best.iterations;
    result.converged = best.converged;
    result.excluded_points = best.excluded;
    result.start_index = best_start;

    // Covariance from the Jacobian at the solution.
    const int k = static_cast<int>(free_indices.size());
    const auto jac = fd_jacobian(problem, best.x, free_indices);
    const std::size_t rows = jac.size() / k;
    std::vector<double> jtj(k * k, 0.0);
    for (std::size_t row = 0; row < rows; ++row)
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) jtj[a * k + b] += jac[row * k + a] * jac[row * k + b];
    std::vector<double> inv;
    const int dof = static_cast<int>(rows) - k;
    const double sigma2 =
        dof > 0 ? best.norm * best.norm / static_cast<double>(dof) : best.norm * best.norm;
    if (detail::invert_dense(jtj, inv, k)) {
        result.covariance.resize(k * k);
        bool sane = true;
        for (int i = 0; i < k * k; ++i) {
            result.covariance[i] = sigma2 * inv[i];
            if (!std::isfinite(result.covariance[i])) sane = false;
        }
        for (int i = 0; i < k && sane; ++i)
            if (inv[i * k + i] < 0.0 || inv[i * k + i] > 1e12) sane = false;
        if (!sane) {
            std::fill(result.covariance.begin(), result.covariance.end(),
                      std::numeric_limits<double>::infinity());
            result.message = "normal equations ill-conditioned: parameters not identifiable";
        }
    } else {
        result.covariance.assign(k * k, std::numeric_limits<double>::infinity());
        result.message = "singular normal equations: parameters not identifiable";
    }
    if (!result.converged && result.message.empty())
        result.message = "did not converge within " + std::to_string(problem.max_iterations) +
                         " iterations";
    return result;
}

}  // namespace mzi
