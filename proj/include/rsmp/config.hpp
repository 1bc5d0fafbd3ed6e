#pragma once

// Run configuration for the batch front-end: JSON document, dotted overrides,
// and the CSV writer every subcommand shares.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "rsmp/market.hpp"
#include "rsmp/simulate.hpp"

namespace rsmp {

enum class ProblemMode { quadratic, frontier };

struct RunConfig {
    nlohmann::json document;  // after overrides
    MarketModel market;
    GeneratorMatrix generator;
    ProblemMode mode = ProblemMode::quadratic;
    std::optional<double> target{};   // d
    std::vector<double> target_means{};  // a, frontier mode
    SimulationConfig sim{};
    std::size_t steps_per_cell = kDefaultStepsPerCell;
    std::filesystem::path output_directory = ".";
    bool emit_paths = false;
};

namespace detail {

inline std::vector<std::string> split_dotted(std::string_view key) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        parts.emplace_back(key.substr(start, dot - start));
        if (parts.back().empty()) throw Error(ErrorKind::ConfigParse, "empty component in override key '" + std::string(key) + "'");
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    return parts;
}

inline std::uint64_t as_count(const nlohmann::json& v, const std::string& where, bool allow_zero = false) {
    const double x = as_number(v, where);
    if (!(x >= (allow_zero ? 0.0 : 1.0)) || x != std::floor(x) || x > 9.007199254740992e15) {
        throw Error(ErrorKind::ConfigParse, where + " must be a " + (allow_zero ? "non-negative" : "positive") + " integer");
    }
    return static_cast<std::uint64_t>(x);
}

}  // namespace detail

/// Applies one `key=value` override (leading dashes allowed). The value is
/// read as JSON when it parses, otherwise kept as a string.
inline void apply_override(nlohmann::json& doc, std::string_view arg) {
    while (!arg.empty() && arg.front() == '-') arg.remove_prefix(1);
    const std::size_t eq = arg.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::ConfigParse, "override '" + std::string(arg) + "' is not key=value");
    const std::string text(arg.substr(eq + 1));
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    nlohmann::json* node = &doc;
    const auto parts = detail::split_dotted(arg.substr(0, eq));
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        if (!node->is_object()) throw Error(ErrorKind::ConfigParse, "override path '" + parts[k] + "' crosses a non-object");
        node = &(*node)[parts[k]];
        if (node->is_null()) *node = nlohmann::json::object();
    }
    if (!node->is_object()) throw Error(ErrorKind::ConfigParse, "override path ends below a non-object");
    (*node)[parts.back()] = std::move(value);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigParse, "cannot open config " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ConfigParse, path.string() + ": " + e.what());
    }
}

inline RunConfig parse_run_config(nlohmann::json doc, const std::vector<std::string>& overrides = {}) {
    for (const auto& o : overrides) apply_override(doc, o);
    if (!doc.is_object()) throw Error(ErrorKind::ConfigParse, "config root must be an object");

    RunConfig cfg{.document = doc, .market = load_market(doc), .generator = load_generator(doc)};

    if (doc.contains("problem")) {
        const auto& p = doc.at("problem");
        if (p.contains("mode")) {
            const auto mode = p.at("mode").is_string() ? p.at("mode").get<std::string>() : std::string{};
            if (mode == "quadratic") cfg.mode = ProblemMode::quadratic;
            else if (mode == "frontier") cfg.mode = ProblemMode::frontier;
            else throw Error(ErrorKind::ConfigParse, "problem.mode must be \"quadratic\" or \"frontier\"");
        }
        if (p.contains("d")) cfg.target = detail::as_number(p.at("d"), "problem.d");
        if (p.contains("a")) {
            if (p.at("a").is_array()) {
                for (const auto& a : p.at("a")) cfg.target_means.push_back(detail::as_number(a, "problem.a"));
            } else {
                cfg.target_means.push_back(detail::as_number(p.at("a"), "problem.a"));
            }
        }
    }
    if (cfg.mode == ProblemMode::quadratic && !cfg.target) throw Error(ErrorKind::MissingField, "problem.d is required in quadratic mode");
    if (cfg.mode == ProblemMode::frontier && cfg.target_means.empty()) throw Error(ErrorKind::MissingField, "problem.a is required in frontier mode");

    const auto& n = detail::require(doc, "numerics", "");
    cfg.sim.seed = detail::as_count(detail::require(n, "seed", "numerics"), "numerics.seed", true);
    if (n.contains("n_paths")) cfg.sim.n_paths = detail::as_count(n.at("n_paths"), "numerics.n_paths");
    if (n.contains("n_steps")) cfg.sim.n_steps = detail::as_count(n.at("n_steps"), "numerics.n_steps");
    if (n.contains("steps_per_cell")) cfg.steps_per_cell = detail::as_count(n.at("steps_per_cell"), "numerics.steps_per_cell");
    if (n.contains("workers")) cfg.sim.workers = static_cast<unsigned>(detail::as_count(n.at("workers"), "numerics.workers", true));
    if (cfg.sim.n_paths < 2) throw Error(ErrorKind::ConfigParse, "numerics.n_paths must be at least 2");

    if (doc.contains("output")) {
        const auto& o = doc.at("output");
        if (o.contains("directory")) {
            if (!o.at("directory").is_string()) throw Error(ErrorKind::ConfigParse, "output.directory must be a string");
            cfg.output_directory = o.at("directory").get<std::string>();
        }
        if (o.contains("emit_paths")) {
            if (!o.at("emit_paths").is_boolean()) throw Error(ErrorKind::ConfigParse, "output.emit_paths must be a boolean");
            cfg.emit_paths = o.at("emit_paths").get<bool>();
        }
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    return parse_run_config(read_json_file(path), overrides);
}

/// Shortest round-trip is not wanted here: fixed 17 significant digits keeps
/// columns comparable byte for byte.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row_strings(header); }

    template <class... Cells>
    void row(const Cells&... cells) {
        static_assert(sizeof...(Cells) > 0);
        std::vector<std::string> out;
        (out.push_back(cell(cells)), ...);
        row_strings(out);
    }

    const std::string& str() const { return text_; }

    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        out << text_;
        if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
    }

private:
    static std::string cell(double v) { return format_double(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(bool b) { return b ? "true" : "false"; }
    template <class I>
        requires std::is_integral_v<I>
    static std::string cell(I v) {
        return std::to_string(v);
    }

    void row_strings(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) throw Error(ErrorKind::InvalidArgument, "CSV row width mismatch");
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k) text_ += ',';
            text_ += escape(cells[k]);
        }
        text_ += '\n';
    }

    static std::string escape(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }

    std::size_t columns_;
    std::string text_;
};

}  // namespace rsmp
