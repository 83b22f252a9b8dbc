#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mzi/analytic.hpp"
#include "mzi/common.hpp"
#include "mzi/photon_mc.hpp"
#include "mzi/protocols.hpp"

namespace mzi {

/// Malformed or inconsistent dataset file; the message carries the file,
/// line number and offending column.
class dataset_format_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline const char* to_string(Source s) {
    switch (s) {
        case Source::Analytic: return "analytic";
        case Source::Protocol: return "protocol";
        case Source::MonteCarlo: return "monte-carlo";
    }
    return "analytic";
}

inline Source source_from_string(const std::string& s) {
    if (s == "analytic") return Source::Analytic;
    if (s == "protocol") return Source::Protocol;
    if (s == "monte-carlo") return Source::MonteCarlo;
    throw dataset_format_error("unknown source tag '" + s + "'");
}

namespace detail {

// 17 significant digits: enough to reproduce any double bit-exactly.
inline std::string format17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

inline double parse_double(const std::string& text, const std::string& file, int line,
                           const char* column) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw dataset_format_error(file + ":" + std::to_string(line) + ": column '" + column +
                                   "': cannot parse '" + text + "' as a number");
    return value;
}

inline void check_range(double value, double lo, double hi, const std::string& file, int line,
                        const char* column) {
    if (!(value >= lo && value <= hi))
        throw dataset_format_error(file + ":" + std::to_string(line) + ": column '" + column +
                                   "': value " + format17(value) + " outside [" +
                                   format17(lo) + ", " + format17(hi) + "]");
}

}  // namespace detail

inline constexpr const char* kSweepCsvHeader =
    "r,p,p_sq,v1,v1_sq,v2,v2_sq,duality1,duality2,source";

inline std::string dataset_row(const DualityPoint& pt) {
    using detail::format17;
    std::string row;
    row += format17(pt.r);
    row += ',' + format17(pt.p);
    row += ',' + format17(pt.p * pt.p);
    row += ',' + format17(pt.v1);
    row += ',' + format17(pt.v1 * pt.v1);
    row += ',' + format17(pt.v2);
    row += ',' + format17(pt.v2 * pt.v2);
    row += ',' + format17(pt.duality1);
    row += ',' + format17(pt.duality2);
    row += ',';
    row += to_string(pt.source);
    return row;
}

inline void write_dataset(const SweepDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // LF endings on every platform
    detail::require(out.good(), "cannot open '" + path + "' for writing");
    out << kSweepCsvHeader << '\n';
    for (const auto& pt : ds.points) out << dataset_row(pt) << '\n';
    detail::require(out.good(), "write to '" + path + "' failed");
}

inline SweepDataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw dataset_format_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw dataset_format_error(path + ": empty file");
    {
        auto fields = detail::split_csv_line(line);
        std::string joined;
        for (std::size_t i = 0; i < fields.size(); ++i)
            joined += (i == 0 ? "" : ",") + fields[i];
        if (joined != kSweepCsvHeader)
            throw dataset_format_error(path + ":1: bad header, expected '" +
                                       std::string(kSweepCsvHeader) + "'");
    }
    SweepDataset ds;
    int line_no = 1;
    double prev_r = -1.0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 10)
            throw dataset_format_error(path + ":" + std::to_string(line_no) + ": expected 10 columns, got " +
                                       std::to_string(f.size()));
        DualityPoint pt;
        pt.r = detail::parse_double(f[0], path, line_no, "r");
        detail::check_range(pt.r, 0.0, 1.0, path, line_no, "r");
        if (pt.r <= prev_r)
            throw dataset_format_error(path + ":" + std::to_string(line_no) +
                                       ": column 'r': values must be strictly increasing");
        prev_r = pt.r;
        pt.p = detail::parse_double(f[1], path, line_no, "p");
        detail::check_range(pt.p, 0.0, 1.0, path, line_no, "p");
        const double p_sq = detail::parse_double(f[2], path, line_no, "p_sq");
        pt.v1 = detail::parse_double(f[3], path, line_no, "v1");
        detail::check_range(pt.v1, 0.0, 1.0, path, line_no, "v1");
        const double v1_sq = detail::parse_double(f[4], path, line_no, "v1_sq");
        pt.v2 = detail::parse_double(f[5], path, line_no, "v2");
        detail::check_range(pt.v2, 0.0, 1.0, path, line_no, "v2");
        const double v2_sq = detail::parse_double(f[6], path, line_no, "v2_sq");
        pt.duality1 = detail::parse_double(f[7], path, line_no, "duality1");
        pt.duality2 = detail::parse_double(f[8], path, line_no, "duality2");
        try {
            pt.source = source_from_string(f[9]);
        } catch (const dataset_format_error&) {
            throw dataset_format_error(path + ":" + std::to_string(line_no) +
                                       ": column 'source': unknown tag '" + f[9] + "'");
        }
        auto consistent = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
        if (!consistent(p_sq, pt.p * pt.p))
            throw dataset_format_error(path + ":" + std::to_string(line_no) +
                                       ": column 'p_sq': inconsistent with p");
        if (!consistent(v1_sq, pt.v1 * pt.v1) || !consistent(v2_sq, pt.v2 * pt.v2))
            throw dataset_format_error(path + ":" + std::to_string(line_no) +
                                       ": column 'v1_sq'/'v2_sq': inconsistent with v");
        if (!consistent(pt.duality1, pt.p * pt.p + pt.v1 * pt.v1) ||
            !consistent(pt.duality2, pt.p * pt.p + pt.v2 * pt.v2))
            throw dataset_format_error(path + ":" + std::to_string(line_no) +
                                       ": column 'duality1'/'duality2': not p^2 + v^2");
        ds.points.push_back(pt);
    }
    if (ds.points.empty()) throw dataset_format_error(path + ": no data rows");
    return ds;
}

/// Monte Carlo results carry three extra standard-error columns.
inline constexpr const char* kMcCsvHeader =
    "r,p,p_sq,v1,v1_sq,v2,v2_sq,duality1,duality2,source,se_p,se_v1,se_v2";

inline void write_mc_dataset(const std::vector<McDualityPoint>& points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    detail::require(out.good(), "cannot open '" + path + "' for writing");
    out << kMcCsvHeader << '\n';
    for (const auto& mc : points) {
        out << dataset_row(mc.point) << ',' << detail::format17(mc.se_p) << ','
            << detail::format17(mc.se_v1) << ',' << detail::format17(mc.se_v2) << '\n';
    }
    detail::require(out.good(), "write to '" + path + "' failed");
}

// --- JSON configuration -----------------------------------------------------

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    return {
        {"configuration",
         cfg.configuration == Configuration::SplitterVariable ? "splitter-variable"
                                                              : "merger-variable"},
        {"loss_placement", cfg.loss_placement == LossPlacement::None
                               ? "none"
                               : (cfg.loss_placement == LossPlacement::Inside ? "inside"
                                                                              : "outside")},
        {"l1", cfg.losses.l1()},
        {"l2", cfg.losses.l2()},
        {"q1", cfg.efficiencies.q1()},
        {"q2", cfg.efficiencies.q2()},
        {"v0", cfg.v0},
    };
}

inline Configuration configuration_from_json(const nlohmann::json& j) {
    if (j.is_number_integer()) {
        const int v = j.get<int>();
        detail::require(v == 1 || v == 2, "configuration must be 1 or 2");
        return v == 1 ? Configuration::SplitterVariable : Configuration::MergerVariable;
    }
    const std::string s = j.get<std::string>();
    if (s == "splitter-variable" || s == "1") return Configuration::SplitterVariable;
    if (s == "merger-variable" || s == "2") return Configuration::MergerVariable;
    throw std::invalid_argument("unknown configuration '" + s + "'");
}

inline LossPlacement placement_from_string(const std::string& s) {
    if (s == "none") return LossPlacement::None;
    if (s == "inside") return LossPlacement::Inside;
    if (s == "outside") return LossPlacement::Outside;
    throw std::invalid_argument("unknown loss placement '" + s + "'");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    const Configuration c = j.contains("configuration")
                                ? configuration_from_json(j.at("configuration"))
                                : Configuration::SplitterVariable;
    const LossPlacement p = j.contains("loss_placement")
                                ? placement_from_string(j.at("loss_placement").get<std::string>())
                                : LossPlacement::None;
    const double l1 = j.value("l1", 0.0);
    const double l2 = j.value("l2", 0.0);
    const double q1 = j.value("q1", 1.0);
    const double q2 = j.value("q2", 1.0);
    const double v0 = j.value("v0", 1.0);
    return {c, p, LossPair(l1, l2), DetectorPair(q1, q2), v0};
}

// --- Run manifest -------------------------------------------------------------

/// Everything needed to reproduce a run bit-exactly: the subcommand, its
/// fully resolved options (including all seeds), tool version, and the files
/// the run wrote. The timestamp is informational only.
struct RunManifest {
    std::string command;
    nlohmann::json options;
    std::string version = kVersion;
    std::string timestamp;
    std::vector<std::string> outputs;
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    return {{"command", m.command},
            {"options", m.options},
            {"version", m.version},
            {"timestamp", m.timestamp},
            {"outputs", m.outputs}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.options = j.at("options");
    m.version = j.value("version", "");
    m.timestamp = j.value("timestamp", "");
    if (j.contains("outputs")) m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    detail::require(out.good(), "cannot open '" + path + "' for writing");
    out << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    detail::require(in.good(), "cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return manifest_from_json(j);
}

/// Default master seed: the MZI_SEED environment variable when set, else 1.
inline std::uint64_t default_seed() {
    if (const char* env = std::getenv("MZI_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0') return static_cast<std::uint64_t>(v);
        throw std::invalid_argument("MZI_SEED must be an unsigned integer");
    }
    return 1;
}

}  // namespace mzi
