// CSV ingestion with header-driven schemas, and result emission (JSON, CSV
// and text) for fits and benchmarks. All numeric text output uses 15
// significant digits; JSON holds full round-trip precision.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orthodr/dr_fit.hpp"
#include "orthodr/errors.hpp"
#include "orthodr/regression.hpp"
#include "orthodr/simgen.hpp"
#include "orthodr/survival.hpp"

namespace orthodr {

using OrderedJson = nlohmann::ordered_json;

inline std::string format_g15(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    return buf;
}

// A fully numeric CSV with a header row. Row labels (a leading non-numeric
// column) are tolerated and kept aside so emitted B matrices re-ingest.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::string> row_labels;   // empty when the file is purely numeric
    Matrix values;

    Index n() const { return values.rows(); }

    Index column_index(const std::string& name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw ParseError("column '" + name + "' not found in CSV header");
        return static_cast<Index>(it - columns.begin());
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t b = 0;
        while (b < cell.size() && cell[b] == ' ') ++b;
        cells.push_back(cell.substr(b));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return v;
}

} // namespace detail

inline Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("'" + path.string() + "': empty file");

    Table t;
    t.columns = detail::split_csv_line(line);
    if (t.columns.empty()) throw ParseError("'" + path.string() + "': missing header row");

    std::vector<std::vector<double>> rows;
    // Label mode is schema-driven: only the headers this library emits
    // ("feature", "row") mark a leading label column.
    const bool labeled = t.columns[0] == "feature" || t.columns[0] == "row";
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        std::size_t start = 0;
        if (labeled) {
            if (cells.empty()) continue;
            t.row_labels.push_back(cells[0]);
            start = 1;
        }
        const std::size_t width = t.columns.size() - (labeled ? 1 : 0);
        if (cells.size() - start != width)
            throw ParseError("'" + path.string() + "' line " + std::to_string(lineno) +
                             ": expected " + std::to_string(width) + " cells, got " +
                             std::to_string(cells.size() - start));
        std::vector<double> row;
        row.reserve(width);
        for (std::size_t c = start; c < cells.size(); ++c) {
            const auto v = detail::parse_double(cells[c]);
            if (!v)
                throw ParseError("'" + path.string() + "' line " + std::to_string(lineno) +
                                 ", column '" + t.columns[c] + "': non-numeric cell '" +
                                 cells[c] + "'");
            if (!std::isfinite(*v))
                throw ParseError("'" + path.string() + "' line " + std::to_string(lineno) +
                                 ", column '" + t.columns[c] + "': non-finite cell '" +
                                 cells[c] + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (labeled) t.columns.erase(t.columns.begin());

    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return t;
}

struct IngestedSurv {
    SurvivalDataset data;
    std::vector<std::string> feature_names;
};

inline IngestedSurv ingest_surv_csv(const std::filesystem::path& path,
                                    const std::string& time_col,
                                    const std::string& censor_col) {
    const Table t = read_csv(path);
    const Index yc = t.column_index(time_col);
    const Index dc = t.column_index(censor_col);
    IngestedSurv out;
    out.data.Y = t.values.col(yc);
    out.data.delta.resize(t.n());
    for (Index i = 0; i < t.n(); ++i)
        out.data.delta[i] = static_cast<int>(t.values(i, dc));
    out.data.X.resize(t.n(), t.values.cols() - 2);
    Index k = 0;
    for (Index j = 0; j < t.values.cols(); ++j) {
        if (j == yc || j == dc) continue;
        out.data.X.col(k) = t.values.col(j);
        out.feature_names.push_back(t.columns[j]);
        ++k;
    }
    return out;
}

struct IngestedReg {
    RegressionDataset data;
    std::vector<std::string> feature_names;
};

inline IngestedReg ingest_reg_csv(const std::filesystem::path& path,
                                  const std::string& outcome_col) {
    const Table t = read_csv(path);
    const Index yc = t.column_index(outcome_col);
    IngestedReg out;
    out.data.y = t.values.col(yc);
    out.data.X.resize(t.n(), t.values.cols() - 1);
    Index k = 0;
    for (Index j = 0; j < t.values.cols(); ++j) {
        if (j == yc) continue;
        out.data.X.col(k) = t.values.col(j);
        out.feature_names.push_back(t.columns[j]);
        ++k;
    }
    return out;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& M,
                             const std::vector<std::string>& col_names,
                             const std::vector<std::string>& row_labels = {},
                             const std::string& label_header = "row") {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    const bool labeled = !row_labels.empty();
    if (labeled) out << label_header;
    for (std::size_t j = 0; j < col_names.size(); ++j) {
        if (labeled || j > 0) out << ',';
        out << col_names[j];
    }
    out << '\n';
    for (Index i = 0; i < M.rows(); ++i) {
        if (labeled) out << row_labels[i];
        for (Index j = 0; j < M.cols(); ++j) {
            if (labeled || j > 0) out << ',';
            out << format_g15(M(i, j));
        }
        out << '\n';
    }
}

enum class EmitFormat { json, csv, text, all };

inline EmitFormat parse_emit_format(const std::string& name) {
    if (name == "json") return EmitFormat::json;
    if (name == "csv") return EmitFormat::csv;
    if (name == "text") return EmitFormat::text;
    if (name == "all") return EmitFormat::all;
    throw ValidationError("unknown output format '" + name + "'");
}

inline std::vector<std::string> direction_names(Index d) {
    std::vector<std::string> names;
    for (Index j = 0; j < d; ++j) names.push_back("dir" + std::to_string(j + 1));
    return names;
}

// Writes the fit into out_dir: result.json (full metadata), B.csv
// (row-labeled loadings), trace.csv, projected.csv (B'X columns alongside
// the outcome, plot-ready), and summary.txt. Timing is deliberately not
// written so identical runs produce identical bytes.
inline void emit_results(const DrFitResult& result,
                         const std::vector<std::string>& feature_names,
                         const Matrix& projected, const Matrix& outcome_cols,
                         const std::vector<std::string>& outcome_names,
                         const std::filesystem::path& out_dir, EmitFormat format) {
    std::filesystem::create_directories(out_dir);
    const Matrix& B = result.B().values();
    const Index d = B.cols();

    if (format == EmitFormat::json || format == EmitFormat::all) {
        OrderedJson j;
        j["method"] = result.method;
        j["ndr"] = d;
        j["bw"] = result.bw;
        j["slice_fraction"] = result.slice_fraction;
        j["fval"] = result.fit.fval;
        j["iterations"] = result.fit.iterations;
        j["converged"] = result.fit.converged;
        j["stop_reason"] = to_string(result.fit.reason);
        j["reorthonormalizations"] = result.fit.reorthonormalizations;
        j["max_orth_error"] = result.fit.max_orth_error;
        j["initial_fallback"] = result.initial_fallback;
        j["degenerate_mean_windows"] = result.degenerate_mean_windows;
        j["degenerate_hazard_windows"] = result.degenerate_hazard_windows;
        j["features"] = feature_names;
        j["center"] = std::vector<double>(result.center.data(),
                                          result.center.data() + result.center.size());
        j["scale"] = std::vector<double>(result.scale.data(),
                                         result.scale.data() + result.scale.size());
        std::vector<std::vector<double>> bmat;
        for (Index i = 0; i < B.rows(); ++i)
            bmat.emplace_back(B.row(i).begin(), B.row(i).end());
        j["B"] = bmat;
        j["fval_trace"] = result.fit.fval_trace;
        std::ofstream out(out_dir / "result.json");
        if (!out) throw Error("cannot write '" + (out_dir / "result.json").string() + "'");
        out << j.dump(2) << '\n';
    }

    if (format == EmitFormat::csv || format == EmitFormat::all) {
        write_matrix_csv(out_dir / "B.csv", B, direction_names(d), feature_names, "feature");

        Matrix trace(static_cast<Index>(result.fit.fval_trace.size()), 2);
        for (Index i = 0; i < trace.rows(); ++i) {
            trace(i, 0) = static_cast<double>(i);
            trace(i, 1) = result.fit.fval_trace[static_cast<std::size_t>(i)];
        }
        write_matrix_csv(out_dir / "trace.csv", trace, {"iteration", "fval"});

        Matrix proj(projected.rows(), projected.cols() + outcome_cols.cols());
        proj.leftCols(projected.cols()) = projected;
        proj.rightCols(outcome_cols.cols()) = outcome_cols;
        std::vector<std::string> names;
        for (Index j = 0; j < projected.cols(); ++j)
            names.push_back("z" + std::to_string(j + 1));
        names.insert(names.end(), outcome_names.begin(), outcome_names.end());
        write_matrix_csv(out_dir / "projected.csv", proj, names);
    }

    if (format == EmitFormat::text || format == EmitFormat::all) {
        std::ofstream out(out_dir / "summary.txt");
        if (!out) throw Error("cannot write '" + (out_dir / "summary.txt").string() + "'");
        out << "method: " << result.method << "\n"
            << "ndr: " << d << "\n"
            << "bw: " << format_g15(result.bw) << "\n"
            << "fval: " << format_g15(result.fit.fval) << "\n"
            << "iterations: " << result.fit.iterations << "\n"
            << "converged: " << (result.fit.converged ? "yes" : "no") << " ("
            << to_string(result.fit.reason) << ")\n"
            << "B (standardized scale):\n";
        for (Index i = 0; i < B.rows(); ++i) {
            out << "  " << feature_names[static_cast<std::size_t>(i)];
            for (Index j = 0; j < d; ++j) out << ' ' << format_g15(B(i, j));
            out << '\n';
        }
    }
}

inline void write_bench_results(const std::vector<BenchResult>& results,
                                const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    OrderedJson summary = OrderedJson::array();
    for (std::size_t r = 0; r < results.size(); ++r) {
        const auto& res = results[r];
        Matrix trace(static_cast<Index>(res.trace.size()), 2);
        for (Index i = 0; i < trace.rows(); ++i) {
            trace(i, 0) = static_cast<double>(i);
            trace(i, 1) = res.trace[static_cast<std::size_t>(i)];
        }
        write_matrix_csv(out_dir / ("trace_" + std::to_string(r + 1) + ".csv"), trace,
                         {"iteration", "fval"});
        OrderedJson j;
        j["problem"] = res.problem;
        j["n"] = res.n;
        j["p"] = res.p;
        j["d"] = res.d;
        j["seed"] = res.seed;
        j["iterations"] = res.trace.size() - 1;
        j["seconds"] = res.seconds;
        j["final_fval"] = res.trace.back();
        j["oracle_distance"] = res.oracle_distance;
        summary.push_back(j);
    }
    {
        std::ofstream out(out_dir / "summary.json");
        out << summary.dump(2) << '\n';
    }
    Matrix table(static_cast<Index>(results.size()), 5);
    for (Index r = 0; r < table.rows(); ++r) {
        const auto& res = results[static_cast<std::size_t>(r)];
        table(r, 0) = static_cast<double>(res.n);
        table(r, 1) = static_cast<double>(res.p);
        table(r, 2) = static_cast<double>(res.trace.size() - 1);
        table(r, 3) = res.seconds;
        table(r, 4) = res.oracle_distance;
    }
    write_matrix_csv(out_dir / "timings.csv", table,
                     {"n", "p", "iterations", "seconds", "oracle_distance"});
}

} // namespace orthodr
