// Report persistence: report.csv (scalars + attribute table), per-curve CSV
// files, run-comparison tables, and minimal SVG curve plots. Floats print at
// full precision so tables round-trip losslessly.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>

#include "aquatrack/eval/metrics.hpp"

namespace aquatrack {

namespace report_detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace report_detail

inline void write_curve_csv(const std::string& path, const Curve& curve) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "threshold,value\n";
    for (size_t i = 0; i < curve.thresholds.size(); ++i)
        os << report_detail::fmt(curve.thresholds[i]) << "," << report_detail::fmt(curve.values[i])
           << "\n";
}

inline Curve load_curve_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing file: " + path);
    Curve c;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = report_detail::split_csv(line);
        if (f.size() != 2) throw std::runtime_error("malformed curve line in " + path);
        c.thresholds.push_back(std::stod(f[0]));
        c.values.push_back(std::stod(f[1]));
    }
    c.auc = metric_detail::mean(c.values);
    return c;
}

inline void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "metric,value\n";
    os << "success_auc," << report_detail::fmt(report.success_auc) << "\n";
    os << "precision_at_20," << report_detail::fmt(report.precision_at_20) << "\n";
    os << "norm_precision_auc," << report_detail::fmt(report.norm_precision_auc) << "\n";
    os << "n_sequences," << report.sequences.size() << "\n";
    os << "\n";
    os << "attr_index,attr_name,count,success_auc,precision_at_20,norm_precision_auc\n";
    for (const auto& row : report.attributes)
        os << row.index << "," << row.name << "," << row.count << ","
           << report_detail::fmt(row.success_auc) << "," << report_detail::fmt(row.precision_at_20)
           << "," << report_detail::fmt(row.norm_precision_auc) << "\n";
    os << "\n";
    os << "sequence,success_auc,precision_at_20,norm_precision_auc\n";
    for (const auto& ev : report.sequences)
        os << ev.id << "," << report_detail::fmt(ev.success_auc) << ","
           << report_detail::fmt(ev.precision_at_20) << ","
           << report_detail::fmt(ev.norm_precision_auc) << "\n";
}

// One row per run; header follows the S / P / NP convention.
struct RunSummary {
    std::string label;
    double success = 0, precision = 0, norm_precision = 0;

    bool operator==(const RunSummary&) const = default;
};

inline RunSummary summarize(const std::string& label, const MetricReport& report) {
    return RunSummary{label, report.success_auc, report.precision_at_20,
                      report.norm_precision_auc};
}

inline void write_comparison_csv(const std::string& path, const std::vector<RunSummary>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "run,S,P,NP\n";
    for (const auto& r : rows)
        os << r.label << "," << report_detail::fmt(r.success) << ","
           << report_detail::fmt(r.precision) << "," << report_detail::fmt(r.norm_precision)
           << "\n";
}

inline std::vector<RunSummary> load_comparison_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing file: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "run,S,P,NP")
        throw std::runtime_error("malformed comparison header in " + path);
    std::vector<RunSummary> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = report_detail::split_csv(line);
        if (f.size() != 4) throw std::runtime_error("malformed comparison row in " + path);
        rows.push_back(RunSummary{f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    }
    return rows;
}

// Minimal multi-line SVG plot: axes, one polyline per labeled curve, legend.
inline void write_curves_svg(const std::string& path,
                             const std::vector<std::pair<std::string, Curve>>& curves,
                             const std::string& title) {
    if (curves.empty()) throw std::invalid_argument("write_curves_svg: no curves");
    const int W = 640, H = 480, ml = 60, mr = 20, mt = 40, mb = 50;
    double x0 = curves[0].second.thresholds.front();
    double x1 = curves[0].second.thresholds.back();
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
       << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fx = ml + (W - ml - mr) * i / 5.0;
        double fy = H - mb + 16;
        os << "<text x=\"" << fx << "\" y=\"" << fy << "\" text-anchor=\"middle\" font-size=\"10\">"
           << std::setprecision(3) << (x0 + (x1 - x0) * i / 5.0) << "</text>\n";
        double gy = H - mb - (H - mt - mb) * i / 5.0;
        os << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 3
           << "\" text-anchor=\"end\" font-size=\"10\">" << std::setprecision(2) << (i / 5.0)
           << "</text>\n";
    }
    int ci = 0;
    for (const auto& [label, curve] : curves) {
        const char* color = colors[ci % 8];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < curve.thresholds.size(); ++i) {
            double px = ml + (W - ml - mr) * (curve.thresholds[i] - x0) / (x1 - x0);
            double py = H - mb - (H - mt - mb) * std::clamp(curve.values[i], 0.0, 1.0);
            os << px << "," << py << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << W - mr - 10 << "\" y=\"" << mt + 16 + 16 * ci
           << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << label
           << " (AUC " << std::setprecision(4) << curve.auc << ")</text>\n";
        ++ci;
    }
    os << "</svg>\n";
}

// Tracking output files: one x,y,w,h line per frame plus one confidence per
// line, the same layout as groundtruth.txt.
inline void write_prediction_files(const std::string& dir, const SequencePrediction& pred) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream boxes(fs::path(dir) / (pred.id + ".txt"));
    for (const Box& b : pred.boxes) boxes << b.x << "," << b.y << "," << b.w << "," << b.h << "\n";
    std::ofstream conf(fs::path(dir) / (pred.id + "_conf.txt"));
    for (double c : pred.confidence) conf << report_detail::fmt(c) << "\n";
}

inline SequencePrediction load_prediction_files(const std::string& dir, const std::string& id,
                                                int expected_frames) {
    namespace fs = std::filesystem;
    SequencePrediction pred;
    pred.id = id;
    const std::string box_path = (fs::path(dir) / (id + ".txt")).string();
    std::ifstream is(box_path);
    if (!is) throw std::runtime_error("missing prediction file: " + box_path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++lineno;
        auto f = report_detail::split_csv(line);
        if (f.size() != 4)
            throw std::runtime_error(box_path + " line " + std::to_string(lineno) +
                                     ": expected 4 fields");
        pred.boxes.push_back(
            Box{std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3])});
    }
    if (expected_frames >= 0 && static_cast<int>(pred.boxes.size()) != expected_frames)
        throw std::runtime_error(box_path + ": has " + std::to_string(pred.boxes.size()) +
                                 " lines, expected " + std::to_string(expected_frames));
    const std::string conf_path = (fs::path(dir) / (id + "_conf.txt")).string();
    std::ifstream cis(conf_path);
    if (cis)
        while (std::getline(cis, line))
            if (!line.empty()) pred.confidence.push_back(std::stod(line));
    return pred;
}

}  // namespace aquatrack
