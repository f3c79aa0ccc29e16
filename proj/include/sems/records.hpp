#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sems/common.hpp"
#include "sems/pattern.hpp"

namespace sems {

inline const std::array<const char*, 5>& metric_registry() {
    static const std::array<const char*, 5> names = {"accuracy", "macro_f1", "mae_bins",
                                                     "j_disc", "loss"};
    return names;
}

inline bool is_registered_metric(const std::string& name) {
    for (const char* m : metric_registry())
        if (name == m) return true;
    return false;
}

/// One metric observation; the unit of CSV and plot output.
struct ExperimentRecord {
    std::string experiment;
    std::string task;
    std::string method;
    double snr_db = 0.0;
    int n_pilots = 0;
    uint64_t seed = 0;
    std::string metric;
    double value = 0.0;

    auto key() const {
        return std::tie(experiment, task, method, snr_db, n_pilots, seed, metric);
    }
    bool operator<(const ExperimentRecord& o) const {
        return std::tie(experiment, task, method, snr_db, n_pilots, seed, metric, value) <
               std::tie(o.experiment, o.task, o.method, o.snr_db, o.n_pilots, o.seed, o.metric,
                        o.value);
    }
    bool operator==(const ExperimentRecord& o) const {
        return key() == o.key() && value == o.value;
    }
};

inline constexpr const char* kRecordsHeader = "experiment,task,method,snr_db,n_pilots,seed,metric,value";

inline std::string format_record(const ExperimentRecord& r) {
    require(is_registered_metric(r.metric), "record: unregistered metric '" + r.metric + "'");
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g,%d,%llu,%s,%.17g", r.experiment.c_str(),
                  r.task.c_str(), r.method.c_str(), r.snr_db, r.n_pilots,
                  static_cast<unsigned long long>(r.seed), r.metric.c_str(), r.value);
    return buf;
}

inline void emit_csv(std::vector<ExperimentRecord> records, const std::string& path) {
    require(!records.empty(), "emit_csv: no records");
    std::sort(records.begin(), records.end());
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "emit_csv: cannot open " + path);
    out << kRecordsHeader << "\n";
    for (const auto& r : records) out << format_record(r) << "\n";
}

/// Appends records to an existing CSV (creating it with a header first);
/// flushed per call so partially completed sweeps remain loadable.
inline void append_csv(const std::vector<ExperimentRecord>& records, const std::string& path) {
    bool exists = static_cast<bool>(std::ifstream(path));
    std::ofstream out(path, std::ios::app);
    require(static_cast<bool>(out), "append_csv: cannot open " + path);
    if (!exists) out << kRecordsHeader << "\n";
    for (const auto& r : records) out << format_record(r) << "\n";
    out.flush();
}

inline std::vector<ExperimentRecord> parse_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("records csv not found: " + path);
    std::string line;
    std::getline(in, line);
    require(line == kRecordsHeader, "records csv: bad header in " + path);
    std::vector<ExperimentRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream iss(line);
        ExperimentRecord r;
        std::string snr, pilots, seed, value;
        std::getline(iss, r.experiment, ',');
        std::getline(iss, r.task, ',');
        std::getline(iss, r.method, ',');
        std::getline(iss, snr, ',');
        std::getline(iss, pilots, ',');
        std::getline(iss, seed, ',');
        std::getline(iss, r.metric, ',');
        std::getline(iss, value, ',');
        require(!value.empty(), "records csv: bad row '" + line + "'");
        r.snr_db = std::stod(snr);
        r.n_pilots = std::stoi(pilots);
        r.seed = std::stoull(seed);
        r.value = std::stod(value);
        require(is_registered_metric(r.metric), "records csv: unregistered metric in '" + line + "'");
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_latents_csv(const std::vector<std::vector<double>>& latents,
                              const std::vector<int>& labels, const std::string& path) {
    require(latents.size() == labels.size(), "latents csv: size mismatch");
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "latents csv: cannot open " + path);
    out << "frame_id,label";
    const size_t dim = latents.empty() ? 0 : latents[0].size();
    for (size_t d = 0; d < dim; ++d) out << ",f" << d;
    out << "\n";
    for (size_t i = 0; i < latents.size(); ++i) {
        out << i << "," << labels[i];
        char buf[32];
        for (double v : latents[i]) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v);
            out << buf;
        }
        out << "\n";
    }
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

namespace svg {

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    return colors;
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y_mean;
    std::vector<double> y_min;
    std::vector<double> y_max;
};

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

/// Minimal line chart: one polyline per series, shaded min-max band, linear
/// or log10 y axis with tick labels.
inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             std::vector<Series> series, bool log_y) {
    require(!series.empty(), "svg: no series");
    const double width = 720, height = 480;
    const double ml = 70, mr = 170, mt = 40, mb = 50;

    auto ty = [log_y](double v) { return log_y ? std::log10(std::max(v, 1e-12)) : v; };
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, ty(s.y_min[i]));
            ymax = std::max(ymax, ty(s.y_max[i]));
        }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (ty(y) - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "svg: cannot open " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << escape(title) << "</text>\n";

    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(x_label) << "</text>\n";
    std::string y_txt = log_y ? y_label + " (log scale)" : y_label;
    out << "<text x=\"18\" y=\"" << (mt + height - mb) / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 "
        << (mt + height - mb) / 2 << ")\">" << escape(y_txt) << "</text>\n";

    // ticks
    char buf[64];
    for (int i = 0; i <= 4; ++i) {
        double yv = ymin + (ymax - ymin) * i / 4.0;
        double ypix = height - mb - (yv - ymin) / (ymax - ymin) * (height - mt - mb);
        if (log_y)
            std::snprintf(buf, sizeof(buf), "1e%.1f", yv);
        else
            std::snprintf(buf, sizeof(buf), "%.3g", yv);
        out << "<line x1=\"" << ml - 4 << "\" y1=\"" << ypix << "\" x2=\"" << ml << "\" y2=\""
            << ypix << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << ypix + 4
            << "\" text-anchor=\"end\" font-size=\"10\">" << buf << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        double xv = xmin + (xmax - xmin) * i / 4.0;
        std::snprintf(buf, sizeof(buf), "%.3g", xv);
        out << "<line x1=\"" << px(xv) << "\" y1=\"" << height - mb << "\" x2=\"" << px(xv)
            << "\" y2=\"" << height - mb + 4 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">" << buf << "</text>\n";
    }

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const std::string& color = palette()[si % palette().size()];
        if (s.x.size() > 1) {
            out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
            for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << "," << py(s.y_max[i]) << " ";
            for (size_t i = s.x.size(); i-- > 0;) out << px(s.x[i]) << "," << py(s.y_min[i]) << " ";
            out << "\"/>\n";
        }
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << "," << py(s.y_mean[i]) << " ";
        out << "\"/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y_mean[i])
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        double ly = mt + 18.0 * static_cast<double>(si);
        out << "<rect x=\"" << width - mr + 10 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
            << color << "\"/>\n";
        out << "<text x=\"" << width - mr + 28 << "\" y=\"" << ly + 10 << "\" font-size=\"11\">"
            << escape(s.label) << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace svg

/// Pilot-pattern occupancy map: one cell per TF grid entry, filled at pilots.
inline void write_pattern_svg(const PilotPattern& pattern, const std::string& path) {
    const int n = pattern.n_slots(), m = pattern.n_subcarriers();
    const double cell = 10.0, ml = 50, mt = 40;
    const double width = ml + m * cell + 20, height = mt + n * cell + 40;
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), "svg: cannot open " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << "pilot pattern (" << pattern.n_pilots() << " cells)</text>\n";
    for (int slot = 0; slot < n; ++slot)
        for (int sub = 0; sub < m; ++sub) {
            bool p = pattern.is_pilot(slot, sub);
            out << "<rect x=\"" << ml + sub * cell << "\" y=\"" << mt + slot * cell
                << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
                << (p ? "#1f77b4" : "#f2f2f2") << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
        }
    out << "<text x=\"" << ml + m * cell / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"11\">subcarrier</text>\n";
    out << "<text x=\"16\" y=\"" << mt + n * cell / 2
        << "\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 16 "
        << mt + n * cell / 2 << ")\">slot</text>\n";
    out << "</svg>\n";
}

/// Renders one SVG per (experiment, metric) pair: value vs SNR (or vs pilot
/// budget when the budget varies instead), mean over seeds with a min-max
/// band, log y-axis for delay MAE. Returns the written paths.
inline std::vector<std::string> emit_plot(const std::vector<ExperimentRecord>& records,
                                          const std::string& out_dir) {
    require(!records.empty(), "emit_plot: no records");
    std::map<std::pair<std::string, std::string>, std::vector<const ExperimentRecord*>> groups;
    for (const auto& r : records) groups[{r.experiment, r.metric}].push_back(&r);

    std::vector<std::string> written;
    for (auto& [key, group] : groups) {
        const auto& [experiment, metric] = key;
        std::set<double> snrs;
        std::set<int> budgets;
        for (const auto* r : group) {
            snrs.insert(r->snr_db);
            budgets.insert(r->n_pilots);
        }
        const bool budget_axis = budgets.size() > 1 && snrs.size() == 1;

        // method -> x -> values over seeds
        std::map<std::string, std::map<double, std::vector<double>>> by_method;
        for (const auto* r : group) {
            double x = budget_axis ? static_cast<double>(r->n_pilots) : r->snr_db;
            by_method[r->method][x].push_back(r->value);
        }
        std::vector<svg::Series> series;
        for (auto& [method, xs] : by_method) {
            svg::Series s;
            s.label = method;
            for (auto& [x, vals] : xs) {
                double mean = 0.0, lo = vals[0], hi = vals[0];
                for (double v : vals) {
                    mean += v / vals.size();
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                s.x.push_back(x);
                s.y_mean.push_back(mean);
                s.y_min.push_back(lo);
                s.y_max.push_back(hi);
            }
            series.push_back(std::move(s));
        }
        std::string path = out_dir + "/" + experiment + "_" + metric + ".svg";
        svg::write_line_chart(path, experiment + ": " + metric,
                              budget_axis ? "pilot budget" : "SNR (dB)", metric, std::move(series),
                              metric == "mae_bins");
        written.push_back(path);
    }
    return written;
}

}  // namespace sems
