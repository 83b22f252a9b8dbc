// Command-line interface of the MZI duality toolkit: analytic and simulated
// sweeps, fringe scans, photon-counting estimates, parameter fits, bundled
// reference scenarios, and a self-test of the core invariants.
//
// Exit codes: 0 success, 1 usage or input error, 2 degenerate configuration
// (no light on the detectors involved), 3 fit did not converge.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mzi/analytic.hpp"
#include "mzi/fit.hpp"
#include "mzi/io.hpp"
#include "mzi/optics.hpp"
#include "mzi/photon_mc.hpp"
#include "mzi/protocols.hpp"
#include "mzi/rng.hpp"

using nlohmann::json;

namespace {

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string manifest_path_for(const std::string& output) {
    const std::string suffix = ".csv";
    if (output.size() > suffix.size() &&
        output.compare(output.size() - suffix.size(), suffix.size(), suffix) == 0)
        return output.substr(0, output.size() - suffix.size()) + ".manifest.json";
    return output + ".manifest.json";
}

void emit_manifest(const std::string& command, const json& options,
                   const std::vector<std::string>& outputs, const std::string& path) {
    mzi::RunManifest m;
    m.command = command;
    m.options = options;
    m.timestamp = iso_timestamp();
    m.outputs = outputs;
    mzi::write_manifest(m, path);
}

mzi::ExperimentConfig config_from_options(const json& opts) {
    return mzi::config_from_json(opts.at("config"));
}

std::vector<double> uniform_grid(double lo, double hi, int n) {
    mzi::detail::require(n >= 1, "grid needs at least one point");
    mzi::detail::require(hi >= lo, "grid range reversed");
    std::vector<double> grid;
    if (n == 1) {
        grid.push_back(lo);
        return grid;
    }
    for (int i = 0; i < n; ++i)
        grid.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
    return grid;
}

// Shared experiment-configuration flags. File values load first, explicitly
// supplied flags override them.
struct ConfigFlags {
    int configuration = 1;
    std::string losses = "none";
    double l1 = 0.0, l2 = 0.0, q1 = 1.0, q2 = 1.0, v0 = 1.0;
    std::string config_file;

    CLI::Option* opt_configuration = nullptr;
    CLI::Option* opt_losses = nullptr;
    CLI::Option* opt_l1 = nullptr;
    CLI::Option* opt_l2 = nullptr;
    CLI::Option* opt_q1 = nullptr;
    CLI::Option* opt_q2 = nullptr;
    CLI::Option* opt_v0 = nullptr;

    void attach(CLI::App* cmd) {
        opt_configuration =
            cmd->add_option("--config", configuration, "Configuration: 1 = variable splitter, 2 = variable merger")
                ->check(CLI::IsMember({1, 2}));
        opt_losses = cmd->add_option("--losses", losses, "Loss placement: none, inside, outside")
                         ->check(CLI::IsMember({"none", "inside", "outside"}));
        opt_l1 = cmd->add_option("--l1", l1, "Fractional loss on channel 1");
        opt_l2 = cmd->add_option("--l2", l2, "Fractional loss on channel 2");
        opt_q1 = cmd->add_option("--q1", q1, "Detector 1 quantum efficiency");
        opt_q2 = cmd->add_option("--q2", q2, "Detector 2 quantum efficiency");
        opt_v0 = cmd->add_option("--v0", v0, "Instrument visibility ceiling");
        cmd->add_option("--config-file", config_file, "JSON file with the same fields; flags override");
    }

    json resolve() const {
        json cfg = {{"configuration", "splitter-variable"}, {"loss_placement", "none"},
                    {"l1", 0.0},  {"l2", 0.0},  {"q1", 1.0},  {"q2", 1.0},  {"v0", 1.0}};
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            mzi::detail::require(in.good(), "cannot open config file '" + config_file + "'");
            json from_file;
            in >> from_file;
            for (auto& [key, value] : from_file.items()) cfg[key] = value;
        }
        if (opt_configuration->count() || config_file.empty())
            cfg["configuration"] = configuration == 1 ? "splitter-variable" : "merger-variable";
        if (opt_losses->count() || config_file.empty()) cfg["loss_placement"] = losses;
        if (opt_l1->count()) cfg["l1"] = l1;
        if (opt_l2->count()) cfg["l2"] = l2;
        if (opt_q1->count()) cfg["q1"] = q1;
        if (opt_q2->count()) cfg["q2"] = q2;
        if (opt_v0->count()) cfg["v0"] = v0;
        mzi::config_from_json(cfg);  // validate early
        return cfg;
    }
};

// --- subcommand bodies (options arrive fully resolved, also via `rerun`) ----

int run_sweep(const json& opts) {
    const auto cfg = config_from_options(opts);
    const auto grid = uniform_grid(opts.at("rmin"), opts.at("rmax"), opts.at("grid"));
    const std::string mode = opts.at("mode");
    const std::string output = opts.at("output");

    mzi::SweepDataset ds;
    if (mode == "analytic") {
        ds = mzi::analytic_sweep(cfg, grid);
    } else {
        const double sigma = opts.at("noise_sigma");
        std::optional<mzi::NoiseSpec> noise;
        if (sigma > 0.0) noise = mzi::NoiseSpec{sigma, opts.at("seed").get<std::uint64_t>()};
        ds = mzi::duality_sweep(cfg, grid, opts.at("phases"), noise);
    }
    for (double r : ds.skipped_r)
        std::fprintf(stderr, "warning: skipped degenerate grid point r = %g\n", r);
    if (ds.points.empty()) throw mzi::degenerate_input_error("every grid point was degenerate");
    mzi::write_dataset(ds, output);
    emit_manifest("sweep", opts, {output}, manifest_path_for(output));
    return 0;
}

int run_fringe(const json& opts) {
    const auto cfg = config_from_options(opts);
    const std::string output = opts.at("output");
    const mzi::FringeScan scan =
        mzi::run_fringe_scan(cfg, mzi::SplitRatio(opts.at("r")), opts.at("phases"));
    std::ofstream out(output, std::ios::binary);
    mzi::detail::require(out.good(), "cannot open '" + output + "' for writing");
    out << "phase,i1,i2\n";
    for (std::size_t j = 0; j < scan.phases.size(); ++j)
        out << mzi::detail::format17(scan.phases[j]) << ',' << mzi::detail::format17(scan.i1[j])
            << ',' << mzi::detail::format17(scan.i2[j]) << '\n';
    emit_manifest("fringe", opts, {output}, manifest_path_for(output));
    return 0;
}

int run_montecarlo(const json& opts) {
    const auto cfg = config_from_options(opts);
    const std::string output = opts.at("output");
    const auto estimate = mzi::estimate_duality(cfg, mzi::SplitRatio(opts.at("r")),
                                                opts.at("photons").get<std::uint64_t>(),
                                                opts.at("phases"), opts.at("seed").get<std::uint64_t>());
    mzi::write_mc_dataset({estimate}, output);
    emit_manifest("montecarlo", opts, {output}, manifest_path_for(output));
    std::fprintf(stderr,
                 "montecarlo: r = %g  p = %.6f +- %.6f  v1 = %.6f +- %.6f  v2 = %.6f +- %.6f\n",
                 estimate.point.r, estimate.point.p, estimate.se_p, estimate.point.v1,
                 estimate.se_v1, estimate.point.v2, estimate.se_v2);
    return 0;
}

mzi::ModelKind model_from_string(const std::string& s) {
    if (s == "config1-inside") return mzi::ModelKind::Config1Inside;
    if (s == "config1-outside") return mzi::ModelKind::Config1Outside;
    if (s == "config2-inside") return mzi::ModelKind::Config2Inside;
    if (s == "config2-outside") return mzi::ModelKind::Config2Outside;
    throw std::invalid_argument("unknown model '" + s + "'");
}

int run_fit(const json& opts) {
    mzi::FitProblem problem;
    problem.data = mzi::read_dataset(opts.at("input")).points;
    problem.model = model_from_string(opts.at("model"));

    const json& fixed = opts.at("fixed");
    problem.params[mzi::kParamL1].value = fixed.at("l1");
    problem.params[mzi::kParamL2].value = fixed.at("l2");
    problem.params[mzi::kParamQ1].value = fixed.at("q1");
    problem.params[mzi::kParamQ2].value = fixed.at("q2");
    problem.params[mzi::kParamV0].value = fixed.at("v0");

    for (const auto& name : opts.at("free").get<std::vector<std::string>>()) {
        bool known = false;
        for (int i = 0; i < mzi::kParamCount; ++i) {
            if (name == mzi::param_name(i)) {
                problem.params[i].free = true;
                known = true;
            }
        }
        if (!known) throw std::invalid_argument("unknown free parameter '" + name + "'");
    }
    const std::string use = opts.at("use");
    problem.use_p = use.find('p') != std::string::npos;
    problem.use_v = use.find('v') != std::string::npos;
    problem.max_iterations = opts.value("max_iterations", 500);

    const mzi::FitResult result = mzi::fit(problem);

    json out;
    for (int i = 0; i < mzi::kParamCount; ++i) out["estimates"][mzi::param_name(i)] = result.estimates[i];
    for (int idx : result.free_indices) out["free"].push_back(mzi::param_name(idx));
    const int k = static_cast<int>(result.free_indices.size());
    for (int a = 0; a < k; ++a) {
        json row = json::array();
        for (int b = 0; b < k; ++b) row.push_back(result.covariance[a * k + b]);
        out["covariance"].push_back(row);
    }
    out["residual_norm"] = result.residual_norm;
    out["iterations"] = result.iterations;
    out["converged"] = result.converged;
    out["excluded_points"] = result.excluded_points;
    out["start_index"] = result.start_index;
    if (!result.message.empty()) out["message"] = result.message;

    std::cout << out.dump(2) << std::endl;
    if (opts.contains("output") && !opts.at("output").get<std::string>().empty()) {
        const std::string path = opts.at("output");
        std::ofstream f(path, std::ios::binary);
        mzi::detail::require(f.good(), "cannot open '" + path + "' for writing");
        f << out.dump(2) << '\n';
        emit_manifest("fit", opts, {path}, manifest_path_for(path));
    }
    return result.converged ? 0 : 3;
}

json figure_preset(const std::string& id) {
    json cfg;
    if (id == "2" || id == "3") {
        cfg = {{"configuration", "splitter-variable"},
               {"loss_placement", id == "2" ? "inside" : "outside"},
               {"l1", 0.727}, {"l2", 0.396}, {"q1", 0.904}, {"q2", 0.908}, {"v0", 0.992}};
    } else if (id == "5a" || id == "5b") {
        cfg = {{"configuration", "merger-variable"}, {"loss_placement", "inside"},
               {"l1", 0.764}, {"l2", 0.505}, {"q1", 0.904}, {"q2", 0.908}, {"v0", 0.990}};
    } else if (id == "6") {
        cfg = {{"configuration", "merger-variable"}, {"loss_placement", "outside"},
               {"l1", 0.735}, {"l2", 0.434}, {"q1", 0.904}, {"q2", 0.908}, {"v0", 0.990}};
    } else {
        throw std::invalid_argument("unknown figure id '" + id + "' (expected 2, 3, 5a, 5b or 6)");
    }
    return cfg;
}

int run_reproduce(const json& opts) {
    const auto cfg = config_from_options(opts);
    const std::string prefix = opts.at("prefix");
    const std::string curve_path = prefix + "_curve.csv";
    const std::string measured_path = prefix + "_measured.csv";

    const auto curve_grid = uniform_grid(0.0, 1.0, opts.at("curve_points"));
    mzi::SweepDataset curve = mzi::analytic_sweep(cfg, curve_grid);
    mzi::write_dataset(curve, curve_path);

    const auto measured_grid = uniform_grid(0.0, 1.0, opts.at("measured_points"));
    const double sigma = opts.at("noise_sigma");
    std::optional<mzi::NoiseSpec> noise;
    if (sigma > 0.0) noise = mzi::NoiseSpec{sigma, opts.at("seed").get<std::uint64_t>()};
    mzi::SweepDataset measured = mzi::duality_sweep(cfg, measured_grid, opts.at("phases"), noise);
    mzi::write_dataset(measured, measured_path);

    emit_manifest("reproduce-figure", opts, {curve_path, measured_path},
                  prefix + ".manifest.json");
    return 0;
}

// --- selftest ----------------------------------------------------------------

int run_selftest() {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::printf("%s: %s\n", ok ? "ok" : "FAIL", name);
        if (!ok) ++failures;
    };

    {
        mzi::rng::Stream s(42);
        bool ok = true;
        for (int i = 0; i < 200; ++i) {
            const double r = s.next_unit();
            mzi::TwoModeField f(std::polar(s.next_unit() + 0.1, 6.28 * s.next_unit()),
                                std::polar(s.next_unit(), 6.28 * s.next_unit()), 1.0);
            const auto g = mzi::apply_splitter(f, mzi::SplitRatio(r));
            const auto h = mzi::apply_splitter(g, mzi::SplitRatio(r));
            ok = ok && std::abs(mzi::total_power(g) - mzi::total_power(f)) < 1e-12;
            ok = ok && std::abs(h.amp1 - f.amp1) < 1e-12 && std::abs(h.amp2 - f.amp2) < 1e-12;
        }
        check("splitter unitarity and involution", ok);
    }
    {
        mzi::rng::Stream s(7);
        bool ok = true;
        for (int i = 0; i < 200; ++i) {
            mzi::TwoModeField f(std::polar(s.next_unit() + 0.1, 6.28 * s.next_unit()),
                                std::polar(s.next_unit(), 6.28 * s.next_unit()), s.next_unit());
            const auto reading =
                mzi::merge_and_detect(f, mzi::SplitRatio(s.next_unit()), mzi::DetectorPair(1, 1));
            ok = ok && std::abs(reading.i1 + reading.i2 - mzi::total_power(f)) < 1e-12;
        }
        check("merger energy conservation", ok);
    }
    {
        bool ok = true;
        for (double l1 : {0.0, 0.3, 0.7, 0.99})
            for (double l2 : {0.0, 0.3, 0.7, 0.99})
                for (int i = 1; i < 21; ++i) {
                    const double r = i / 21.0;
                    const mzi::ExperimentConfig cfg(mzi::Configuration::SplitterVariable,
                                                    mzi::LossPlacement::Inside,
                                                    mzi::LossPair(l1, l2),
                                                    mzi::DetectorPair(0.9, 0.9), 1.0);
                    const auto pt = mzi::config1_inside(cfg, mzi::SplitRatio(r));
                    ok = ok && std::abs(pt.duality1 - 1.0) < 1e-12;
                }
        check("duality identity (equal efficiencies, v0 = 1)", ok);
    }
    {
        const mzi::ExperimentConfig cfg(mzi::Configuration::MergerVariable,
                                        mzi::LossPlacement::Outside, mzi::LossPair(0.735, 0.434),
                                        mzi::DetectorPair(0.904, 0.908), 0.99);
        const auto roots = mzi::turning_points(cfg);
        const double ka = (1 - 0.735) / 0.904, kb = (1 - 0.434) / 0.908;
        const bool ok = std::abs(roots[0] - ka / (ka + kb)) < 1e-9 &&
                        std::abs(roots[1] - kb / (ka + kb)) < 1e-9;
        check("turning points match closed form", ok);
    }
    {
        bool ok = true;
        for (auto conf : {mzi::Configuration::SplitterVariable, mzi::Configuration::MergerVariable})
            for (auto place : {mzi::LossPlacement::Inside, mzi::LossPlacement::Outside})
                for (double r : {0.2, 0.5, 0.8}) {
                    const mzi::ExperimentConfig cfg(conf, place, mzi::LossPair(0.727, 0.396),
                                                    mzi::DetectorPair(0.9, 0.9), 0.992);
                    const auto a = mzi::evaluate(cfg, mzi::SplitRatio(r));
                    const auto p = mzi::protocol_duality_point(cfg, mzi::SplitRatio(r), 256);
                    ok = ok && std::abs(a.p - p.p) < 1e-9 && std::abs(a.v1 - p.v1) < 1e-9 &&
                         std::abs(a.v2 - p.v2) < 1e-9;
                }
        check("protocol matches closed forms (equal efficiencies)", ok);
    }
    {
        bool ok = true;
        for (auto conf : {mzi::Configuration::SplitterVariable, mzi::Configuration::MergerVariable})
            for (auto place : {mzi::LossPlacement::Inside, mzi::LossPlacement::Outside})
                for (double l1 : {0.0, 0.7})
                    for (double q1 : {0.8, 1.0})
                        for (int i = 1; i < 20; ++i) {
                            const double r = i / 20.0;
                            const mzi::ExperimentConfig cfg(conf, place, mzi::LossPair(l1, 0.3),
                                                            mzi::DetectorPair(q1, 1.0), 0.95);
                            const auto pt = mzi::symmetrize(cfg, mzi::SplitRatio(r));
                            ok = ok && pt.duality1 <= 1.0 + 1e-12;
                            ok = ok && std::abs(pt.p - std::abs(1.0 - 2.0 * r)) < 1e-12;
                        }
        check("symmetrization restores the duality bound", ok);
    }
    {
        mzi::rng::Stream a(123), b(123);
        bool ok = true;
        for (int i = 0; i < 100; ++i) ok = ok && a.next_normal() == b.next_normal();
        check("deterministic random streams", ok);
    }
    return failures == 0 ? 0 : 1;
}

int dispatch(const std::string& command, const json& opts) {
    static const std::map<std::string, std::function<int(const json&)>> table = {
        {"sweep", run_sweep},
        {"fringe", run_fringe},
        {"montecarlo", run_montecarlo},
        {"fit", run_fit},
        {"reproduce-figure", run_reproduce},
    };
    const auto it = table.find(command);
    mzi::detail::require(it != table.end(), "manifest names unknown command '" + command + "'");
    return it->second(opts);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mach-Zehnder interferometer duality toolkit"};
    app.require_subcommand(1);

    std::string run_command;
    json run_opts;

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Duality quantities over a ratio grid -> CSV");
    ConfigFlags sweep_cfg;
    sweep_cfg.attach(sweep);
    std::string sweep_mode = "analytic", sweep_output = "sweep.csv";
    int sweep_grid = 21, sweep_phases = 256;
    double sweep_rmin = 0.0, sweep_rmax = 1.0, sweep_sigma = 0.0;
    std::uint64_t sweep_seed = 0;
    auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "Noise master seed");
    sweep->add_option("--mode", sweep_mode, "analytic or protocol")
        ->check(CLI::IsMember({"analytic", "protocol"}));
    sweep->add_option("--grid", sweep_grid, "Number of ratio grid points")->check(CLI::PositiveNumber);
    sweep->add_option("--rmin", sweep_rmin, "Grid start");
    sweep->add_option("--rmax", sweep_rmax, "Grid end");
    sweep->add_option("--phases", sweep_phases, "Phase samples per fringe scan");
    sweep->add_option("--noise-sigma", sweep_sigma, "Multiplicative intensity noise (protocol mode)");
    sweep->add_option("--output,-o", sweep_output, "Output CSV path");
    sweep->callback([&] {
        run_command = "sweep";
        run_opts = {{"config", sweep_cfg.resolve()},
                    {"mode", sweep_mode},
                    {"grid", sweep_grid},
                    {"rmin", sweep_rmin},
                    {"rmax", sweep_rmax},
                    {"phases", sweep_phases},
                    {"noise_sigma", sweep_sigma},
                    {"seed", sweep_seed_opt->count() ? sweep_seed : mzi::default_seed()},
                    {"output", sweep_output}};
    });

    // fringe
    auto* fringe = app.add_subcommand("fringe", "Single phase scan -> CSV");
    ConfigFlags fringe_cfg;
    fringe_cfg.attach(fringe);
    double fringe_r = 0.5;
    int fringe_phases = 256;
    std::string fringe_output = "fringe.csv";
    fringe->add_option("--r", fringe_r, "Splitting/merging ratio")->required();
    fringe->add_option("--phases", fringe_phases, "Phase samples");
    fringe->add_option("--output,-o", fringe_output, "Output CSV path");
    fringe->callback([&] {
        run_command = "fringe";
        run_opts = {{"config", fringe_cfg.resolve()},
                    {"r", fringe_r},
                    {"phases", fringe_phases},
                    {"output", fringe_output}};
    });

    // montecarlo
    auto* mc = app.add_subcommand("montecarlo", "Photon-counting duality estimate -> CSV");
    ConfigFlags mc_cfg;
    mc_cfg.attach(mc);
    double mc_r = 0.5;
    std::uint64_t mc_photons = 1000000, mc_seed = 0;
    int mc_phases = 32;
    std::string mc_output = "montecarlo.csv";
    auto* mc_seed_opt = mc->add_option("--seed", mc_seed, "Sampling master seed");
    mc->add_option("--r", mc_r, "Splitting/merging ratio")->required();
    mc->add_option("--photons", mc_photons, "Photons per phase setting (>= 1e4)");
    mc->add_option("--phases", mc_phases, "Phase settings");
    mc->add_option("--output,-o", mc_output, "Output CSV path");
    mc->callback([&] {
        run_command = "montecarlo";
        run_opts = {{"config", mc_cfg.resolve()},
                    {"r", mc_r},
                    {"photons", mc_photons},
                    {"phases", mc_phases},
                    {"seed", mc_seed_opt->count() ? mc_seed : mzi::default_seed()},
                    {"output", mc_output}};
    });

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Least-squares parameter recovery from a sweep CSV");
    ConfigFlags fit_cfg;
    fit_cfg.attach(fit_cmd);
    std::string fit_input, fit_model = "config1-inside", fit_free = "L1,L2", fit_use = "p,v";
    std::string fit_output;
    int fit_max_iterations = 500;
    fit_cmd->add_option("--input", fit_input, "Input sweep CSV")->required();
    fit_cmd->add_option("--max-iterations", fit_max_iterations, "Iteration cap per start");
    fit_cmd->add_option("--model", fit_model, "Model: config{1,2}-{inside,outside}")
        ->check(CLI::IsMember({"config1-inside", "config1-outside", "config2-inside",
                               "config2-outside"}));
    fit_cmd->add_option("--free", fit_free, "Comma-separated free parameters (L1,L2,V0,Q1,Q2)");
    fit_cmd->add_option("--use", fit_use, "Quantities entering the residuals: p,v | p | v");
    fit_cmd->add_option("--output,-o", fit_output, "Also write the result JSON here");
    fit_cmd->callback([&] {
        run_command = "fit";
        std::vector<std::string> free_list;
        std::string token;
        std::stringstream ss(fit_free);
        while (std::getline(ss, token, ','))
            if (!token.empty()) free_list.push_back(token);
        const json cfg = fit_cfg.resolve();
        run_opts = {{"input", fit_input},
                    {"model", fit_model},
                    {"free", free_list},
                    {"use", fit_use},
                    {"fixed",
                     {{"l1", cfg.at("l1")},
                      {"l2", cfg.at("l2")},
                      {"q1", cfg.at("q1")},
                      {"q2", cfg.at("q2")},
                      {"v0", cfg.at("v0")}}}};
        if (!fit_output.empty()) run_opts["output"] = fit_output;
    });

    // reproduce-figure
    auto* rep = app.add_subcommand("reproduce-figure",
                                   "Reference scenarios 2, 3, 5a, 5b, 6 -> curve + measured CSV");
    std::string rep_id;
    std::string rep_prefix;
    int rep_curve_points = 201, rep_measured_points = 21, rep_phases = 256;
    double rep_sigma = 0.0;
    std::uint64_t rep_seed = 0;
    auto* rep_seed_opt = rep->add_option("--seed", rep_seed, "Noise master seed");
    rep->add_option("figure", rep_id, "Scenario id: 2, 3, 5a, 5b, 6")->required();
    rep->add_option("--prefix", rep_prefix, "Output file prefix (default fig<ID>)");
    rep->add_option("--curve-points", rep_curve_points, "Analytic curve grid size");
    rep->add_option("--measured-points", rep_measured_points, "Simulated measurement grid size");
    rep->add_option("--phases", rep_phases, "Phase samples per fringe scan");
    rep->add_option("--noise-sigma", rep_sigma, "Multiplicative intensity noise");
    rep->callback([&] {
        run_command = "reproduce-figure";
        run_opts = {{"figure", rep_id},
                    {"config", figure_preset(rep_id)},
                    {"prefix", rep_prefix.empty() ? "fig" + rep_id : rep_prefix},
                    {"curve_points", rep_curve_points},
                    {"measured_points", rep_measured_points},
                    {"phases", rep_phases},
                    {"noise_sigma", rep_sigma},
                    {"seed", rep_seed_opt->count() ? rep_seed : mzi::default_seed()}};
    });

    // selftest
    auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant checks");
    selftest->callback([&] { run_command = "selftest"; });

    // rerun
    auto* rerun = app.add_subcommand("rerun", "Re-execute a run from its manifest");
    std::string rerun_path;
    rerun->add_option("manifest", rerun_path, "Manifest JSON path")->required();
    rerun->callback([&] { run_command = "rerun"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const std::exception& e) {  // config resolution inside callbacks
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    try {
        if (run_command == "selftest") return run_selftest();
        if (run_command == "rerun") {
            const mzi::RunManifest m = mzi::read_manifest(rerun_path);
            return dispatch(m.command, m.options);
        }
        return dispatch(run_command, run_opts);
    } catch (const mzi::degenerate_input_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
