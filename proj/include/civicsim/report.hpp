#pragma once

// Human-readable outputs: markdown agreement tables, CSV report dumps and
// standalone SVG line charts for lambda sweeps. Emitters are deterministic:
// identical inputs produce identical bytes (fixed ordering, fixed number
// formatting, no timestamps).

#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "civicsim/analytics.hpp"
#include "civicsim/domain.hpp"

namespace civicsim {

namespace detail {

// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("double formatting failed");
    return std::string(buf, ptr);
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

// RFC-4180-style line splitter; returns one row of unquoted fields.
inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(current);
    return fields;
}

inline std::string svg_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c; break;
        }
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kReportCsvHeader =
    "scope,model,condition,lambda,rate,n,reference,key";

inline std::string emit_csv(const std::vector<AgreementReport>& reports) {
    std::ostringstream out;
    out << kReportCsvHeader << "\n";
    for (const auto& r : reports) {
        out << scope_token(r.scope) << ',' << detail::csv_quote(r.model) << ','
            << condition_ref_token(r.condition.kind) << ','
            << (r.condition.lambda ? detail::format_double(*r.condition.lambda) : std::string())
            << ',' << detail::format_double(r.rate) << ',' << r.n << ','
            << reference_token(r.reference) << ',' << detail::csv_quote(r.key) << "\n";
    }
    return out.str();
}

inline std::vector<AgreementReport> parse_reports_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("report CSV is empty");
    std::vector<AgreementReport> reports;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = detail::csv_split(line);
        if (fields.size() != 8)
            throw FormatError("report CSV line " + std::to_string(line_no) + ": expected 8 fields");
        AgreementReport r;
        r.scope = scope_from_token(fields[0]);
        r.model = fields[1];
        r.condition.kind = condition_ref_from_token(fields[2]);
        if (!fields[3].empty()) r.condition.lambda = std::stod(fields[3]);
        r.rate = std::stod(fields[4]);
        r.n = static_cast<std::size_t>(std::stoull(fields[5]));
        r.reference = reference_from_token(fields[6]);
        r.key = fields[7];
        reports.push_back(std::move(r));
    }
    return reports;
}

inline constexpr const char* kCurveCsvHeader = "model,policy_set,method,variant,lambda,rate";

inline std::string emit_curves_csv(const std::vector<AlphaCurve>& curves) {
    std::ostringstream out;
    out << kCurveCsvHeader << "\n";
    for (const auto& curve : curves)
        for (const auto& [lambda, rate] : curve.points)
            out << detail::csv_quote(curve.model) << ',' << curve.policy_set << ','
                << curve_method_token(curve.method) << ',' << detail::csv_quote(curve.variant)
                << ',' << detail::format_double(lambda) << ',' << detail::format_double(rate)
                << "\n";
    return out.str();
}

inline std::vector<AlphaCurve> parse_curves_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("curve CSV is empty");
    std::map<std::string, AlphaCurve> curves;  // keyed to preserve grouping
    std::vector<std::string> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = detail::csv_split(line);
        if (fields.size() != 6)
            throw FormatError("curve CSV line " + std::to_string(line_no) + ": expected 6 fields");
        const std::string key = fields[0] + '\x1f' + fields[1] + '\x1f' + fields[2] + '\x1f' +
                                fields[3];
        auto it = curves.find(key);
        if (it == curves.end()) {
            AlphaCurve curve;
            curve.model = fields[0];
            curve.policy_set = fields[1];
            curve.method = curve_method_from_token(fields[2]);
            curve.variant = fields[3];
            it = curves.emplace(key, std::move(curve)).first;
            order.push_back(key);
        }
        it->second.points.emplace_back(std::stod(fields[4]), std::stod(fields[5]));
    }
    std::vector<AlphaCurve> out;
    for (const auto& key : order) out.push_back(std::move(curves.at(key)));
    return out;
}

// ---------------------------------------------------------------------------
// Markdown agreement table

enum class TableLayout { PaperTable };

// One row per policy statement with paired Del./Trus. columns per model; the
// greater value of each pair is bolded, ties bold both. Rates print with two
// decimals. `row_labels` maps report keys to display text (policy
// statements); keys without a label print as-is.
inline std::string emit_agreement_table(const std::vector<AgreementReport>& reports,
                                        TableLayout /*layout*/ = TableLayout::PaperTable,
                                        const std::map<std::string, std::string>& row_labels = {}) {
    auto is_trustee = [](const ConditionRef& c) {
        return c.kind == ConditionRef::Kind::TrusteeDual ||
               c.kind == ConditionRef::Kind::TrusteePeriods ||
               c.kind == ConditionRef::Kind::TrusteeMean;
    };

    std::vector<std::string> rows, models;
    std::map<std::string, std::map<std::string, std::pair<std::optional<double>,
                                                          std::optional<double>>>> grid;
    for (const auto& r : reports) {
        if (std::find(rows.begin(), rows.end(), r.key) == rows.end()) rows.push_back(r.key);
        if (std::find(models.begin(), models.end(), r.model) == models.end())
            models.push_back(r.model);
        auto& cell = grid[r.key][r.model];
        if (r.condition.kind == ConditionRef::Kind::Delegate) {
            if (cell.first) throw ValidationError("duplicate delegate cell for (" + r.key + ", " +
                                                  r.model + ")");
            cell.first = r.rate;
        } else if (is_trustee(r.condition)) {
            if (cell.second) throw ValidationError("duplicate trustee cell for (" + r.key + ", " +
                                                   r.model + ")");
            cell.second = r.rate;
        } else {
            throw ValidationError("agreement table expects delegate and trustee reports only");
        }
    }
    if (rows.empty()) throw ValidationError("agreement table has no reports");

    std::vector<std::string> missing;
    for (const auto& row : rows)
        for (const auto& model : models) {
            const auto& cell = grid[row][model];
            if (!cell.first) missing.push_back("(" + row + ", " + model + ", delegate)");
            if (!cell.second) missing.push_back("(" + row + ", " + model + ", trustee)");
        }
    if (!missing.empty()) {
        std::string message = "agreement table grid is ragged; missing cells:";
        for (const auto& m : missing) message += " " + m;
        throw ValidationError(message);
    }

    std::ostringstream out;
    out << "| Policy Statement |";
    for (const auto& model : models) out << ' ' << model << " Del. | " << model << " Trus. |";
    out << "\n|---|";
    for (std::size_t i = 0; i < models.size(); ++i) out << "---|---|";
    out << "\n";
    for (const auto& row : rows) {
        auto label_it = row_labels.find(row);
        out << "| " << (label_it != row_labels.end() ? label_it->second : row) << " |";
        for (const auto& model : models) {
            const auto& cell = grid[row][model];
            const double del = *cell.first, tru = *cell.second;
            auto fmt = [&](double v, bool bold) {
                std::string s = detail::format_fixed(v, 2);
                return bold ? "**" + s + "**" : s;
            };
            out << ' ' << fmt(del, del >= tru) << " | " << fmt(tru, tru >= del) << " |";
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// SVG line charts

struct ChartSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool bold = false;
    std::string color;  // assigned from the palette when empty
};

struct ChartSpec {
    std::string title;
    std::string x_label = "lambda (long-term emphasis)";
    std::string y_label = "agreement rate";
    double x_min = 0.0, x_max = 1.0;
    double y_min = 0.0, y_max = 1.0;
    std::vector<ChartSeries> series;
    std::optional<double> baseline;  // dashed horizontal reference line
    std::string baseline_label = "delegate";
};

inline std::string render_line_chart(const ChartSpec& spec) {
    if (spec.series.empty()) throw DomainError("chart needs at least one series");
    if (!(spec.x_max > spec.x_min) || !(spec.y_max > spec.y_min))
        throw DomainError("chart axis ranges must be non-empty");
    for (const auto& series : spec.series)
        for (const auto& [x, y] : series.points)
            if (x < spec.x_min || x > spec.x_max || y < spec.y_min || y > spec.y_max)
                throw DomainError("chart point outside the declared axis ranges");
    if (spec.baseline && (*spec.baseline < spec.y_min || *spec.baseline > spec.y_max))
        throw DomainError("chart baseline outside the y-axis range");

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    const double width = 840, height = 560;
    const double ml = 70, mr = 180, mt = 50, mb = 60;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    auto sx = [&](double x) { return ml + (x - spec.x_min) / (spec.x_max - spec.x_min) * plot_w; };
    auto sy = [&](double y) {
        return mt + (spec.y_max - y) / (spec.y_max - spec.y_min) * plot_h;
    };
    auto num = [](double v) { return detail::format_fixed(v, 2); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << num(ml) << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\">"
        << detail::svg_escape(spec.title) << "</text>\n";

    // Gridlines and ticks: 10 x-divisions, 10 y-divisions.
    for (int i = 0; i <= 10; ++i) {
        const double xv = spec.x_min + (spec.x_max - spec.x_min) * i / 10.0;
        const double yv = spec.y_min + (spec.y_max - spec.y_min) * i / 10.0;
        svg << "<line x1=\"" << num(sx(xv)) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(sx(xv))
            << "\" y2=\"" << num(mt + plot_h) << "\" stroke=\"#e6e6e6\" stroke-width=\"1\"/>\n";
        svg << "<line x1=\"" << num(ml) << "\" y1=\"" << num(sy(yv)) << "\" x2=\""
            << num(ml + plot_w) << "\" y2=\"" << num(sy(yv))
            << "\" stroke=\"#e6e6e6\" stroke-width=\"1\"/>\n";
        svg << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(mt + plot_h + 20)
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(xv)
            << "</text>\n";
        svg << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(sy(yv) + 4)
            << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(yv)
            << "</text>\n";
    }
    svg << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(plot_w)
        << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg << "<text x=\"" << num(ml + plot_w / 2) << "\" y=\"" << num(height - 16)
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">"
        << detail::svg_escape(spec.x_label) << "</text>\n";
    svg << "<text x=\"18\" y=\"" << num(mt + plot_h / 2)
        << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
        << "transform=\"rotate(-90 18 " << num(mt + plot_h / 2) << ")\">"
        << detail::svg_escape(spec.y_label) << "</text>\n";

    if (spec.baseline) {
        svg << "<line x1=\"" << num(ml) << "\" y1=\"" << num(sy(*spec.baseline)) << "\" x2=\""
            << num(ml + plot_w) << "\" y2=\"" << num(sy(*spec.baseline))
            << "\" stroke=\"#444444\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
    }

    std::size_t color_index = 0;
    std::vector<std::pair<std::string, std::string>> legend;  // label, color
    for (const auto& series : spec.series) {
        std::string color = series.color;
        if (color.empty()) {
            if (series.bold) {
                color = kPalette[color_index % (sizeof kPalette / sizeof kPalette[0])];
                ++color_index;
            } else {
                color = "#9999aa";
            }
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
            << (series.bold ? "2.5" : "1") << "\""
            << (series.bold ? "" : " stroke-opacity=\"0.6\"") << " points=\"";
        bool first = true;
        for (const auto& [x, y] : series.points) {
            if (!first) svg << ' ';
            svg << num(sx(x)) << ',' << num(sy(y));
            first = false;
        }
        svg << "\"/>\n";
        if (series.bold) legend.emplace_back(series.label, color);
    }

    double legend_y = mt + 10;
    for (const auto& [label, color] : legend) {
        svg << "<line x1=\"" << num(ml + plot_w + 12) << "\" y1=\"" << num(legend_y) << "\" x2=\""
            << num(ml + plot_w + 36) << "\" y2=\"" << num(legend_y) << "\" stroke=\"" << color
            << "\" stroke-width=\"2.5\"/>\n";
        svg << "<text x=\"" << num(ml + plot_w + 42) << "\" y=\"" << num(legend_y + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << detail::svg_escape(label)
            << "</text>\n";
        legend_y += 20;
    }
    if (spec.baseline) {
        svg << "<line x1=\"" << num(ml + plot_w + 12) << "\" y1=\"" << num(legend_y) << "\" x2=\""
            << num(ml + plot_w + 36) << "\" y2=\"" << num(legend_y)
            << "\" stroke=\"#444444\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"/>\n";
        svg << "<text x=\"" << num(ml + plot_w + 42) << "\" y=\"" << num(legend_y + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\">"
            << detail::svg_escape(spec.baseline_label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

// Mean curves draw bold, per-variant curves thin; the delegate baseline is a
// dashed horizontal line.
inline std::string emit_alpha_chart(const std::vector<AlphaCurve>& curves,
                                    std::optional<double> delegate_baseline,
                                    ChartSpec spec = ChartSpec{}) {
    if (curves.empty()) throw DomainError("emit_alpha_chart: no curves");
    spec.series.clear();
    for (const auto& curve : curves) {
        ChartSeries series;
        const bool mean = curve.variant == "mean";
        series.label = curve.model + " " + curve_method_token(curve.method) +
                       (mean ? "" : " [" + curve.variant + "]");
        series.points = curve.points;
        series.bold = mean;
        spec.series.push_back(std::move(series));
    }
    spec.baseline = delegate_baseline;
    return render_line_chart(spec);
}

}  // namespace civicsim
