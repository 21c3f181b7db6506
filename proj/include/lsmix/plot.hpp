#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lsmix/core.hpp"

namespace lsmix {

// Minimal CSV table: header row plus string cells. No quoting; the tool's own files never need it.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::string source;

    std::size_t col(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
    bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }

    double num(std::size_t row, std::size_t c) const {
        const auto& s = rows[row][c];
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        try {
            return parse_double(s);
        } catch (const Error&) {
            throw ParseError(source + ": row " + std::to_string(row + 2) + ": '" + s + "' is not a number");
        }
    }
};

inline CsvTable read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    CsvTable t;
    t.source = path;
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw ParseError(path + ": empty CSV");
    for (auto& h : split(trim(line), ',')) t.header.push_back(trim(h));
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split(trim(line), ',');
        if (cells.size() != t.header.size())
            throw ParseError(path + ": row " + std::to_string(t.rows.size() + 2) + " has " + std::to_string(cells.size()) +
                             " fields, header has " + std::to_string(t.header.size()));
        for (auto& c : cells) c = trim(c);
        t.rows.push_back(std::move(cells));
    }
    if (t.rows.empty()) throw ParseError(path + ": CSV has a header but no data rows");
    return t;
}

enum class PlotKind { sweep_curve, boundary_heatmap, variance_timeseries };

inline PlotKind parse_plot_kind(const std::string& s) {
    if (s == "sweep_curve") return PlotKind::sweep_curve;
    if (s == "boundary_heatmap") return PlotKind::boundary_heatmap;
    if (s == "variance_timeseries") return PlotKind::variance_timeseries;
    throw ConfigError("unknown plot kind '" + s + "' (sweep_curve | boundary_heatmap | variance_timeseries)");
}

struct PlotOptions {
    /// Column stem for sweep_curve (reads <metric>_mean/_std) or the column for variance_timeseries.
    std::string metric;
    std::string title;
    int width = 640;
    int height = 420;
};

struct Point2 {
    double x = 0.0, y = 0.0;
};

struct Series {
    std::string label;
    std::vector<double> x, mean, sd;
};

namespace detail {

inline const char* series_color(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return colors[i % 8];
}

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string num4(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

inline std::string coord(double v) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    o << v;
    return o.str();
}

/// Plot frame with linear axes mapping data ranges to the inner rectangle.
struct Frame {
    double x0, x1, y0, y1;
    double left = 70, right = 20, top = 36, bottom = 50;
    int width = 640, height = 420;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::pair<double, double> padded(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        const double pad = std::max(1e-3, std::abs(hi) * 0.1);
        return {lo - pad, hi + pad};
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

inline void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel,
                 const std::string& title) {
    const double bx = f.left, by = f.height - f.bottom, ex = f.width - f.right, ey = f.top;
    o << "<rect x=\"" << coord(bx) << "\" y=\"" << coord(ey) << "\" width=\"" << coord(ex - bx) << "\" height=\""
      << coord(by - ey) << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        o << "<line class=\"tick\" x1=\"" << coord(f.px(xv)) << "\" y1=\"" << coord(by) << "\" x2=\"" << coord(f.px(xv))
          << "\" y2=\"" << coord(by + 5) << "\" stroke=\"#333\"/>";
        o << "<text x=\"" << coord(f.px(xv)) << "\" y=\"" << coord(by + 18) << "\" font-size=\"11\" text-anchor=\"middle\">"
          << num4(xv) << "</text>\n";
        o << "<line class=\"tick\" x1=\"" << coord(bx - 5) << "\" y1=\"" << coord(f.py(yv)) << "\" x2=\"" << coord(bx)
          << "\" y2=\"" << coord(f.py(yv)) << "\" stroke=\"#333\"/>";
        o << "<text x=\"" << coord(bx - 8) << "\" y=\"" << coord(f.py(yv) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
          << num4(yv) << "</text>\n";
    }
    o << "<text x=\"" << coord((bx + ex) / 2) << "\" y=\"" << coord(f.height - 12.0)
      << "\" font-size=\"13\" text-anchor=\"middle\">" << svg_escape(xlabel) << "</text>\n";
    o << "<text transform=\"translate(16," << coord((by + ey) / 2) << ") rotate(-90)\" font-size=\"13\" text-anchor=\"middle\">"
      << svg_escape(ylabel) << "</text>\n";
    if (!title.empty())
        o << "<text x=\"" << coord(f.width / 2.0) << "\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">" << svg_escape(title)
          << "</text>\n";
}

inline std::string svg_open(int w, int h) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace detail

/// Mean lines with shaded +-1 std bands. A series with one x value becomes a point with an error bar.
inline std::string render_series_svg(const std::vector<Series>& series, const std::string& xlabel, const std::string& ylabel,
                                     const PlotOptions& opt) {
    double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.mean[i])) continue;
            const double sd = std::isfinite(s.sd[i]) ? s.sd[i] : 0.0;
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.mean[i] - sd);
            yhi = std::max(yhi, s.mean[i] + sd);
        }
    const auto [fx0, fx1] = detail::padded(xlo, xhi);
    const auto [fy0, fy1] = detail::padded(ylo, yhi);
    detail::Frame f{fx0, fx1, fy0, fy1};
    f.width = opt.width;
    f.height = opt.height;
    std::ostringstream o;
    o << detail::svg_open(opt.width, opt.height);
    detail::axes(o, f, xlabel, ylabel, opt.title);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = detail::series_color(k);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (std::isfinite(s.mean[i])) idx.push_back(i);
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
        if (idx.empty()) continue;
        auto sd_at = [&](std::size_t i) { return std::isfinite(s.sd[i]) ? s.sd[i] : 0.0; };
        if (idx.size() == 1) {
            const auto i = idx[0];
            o << "<line class=\"errorbar\" x1=\"" << detail::coord(f.px(s.x[i])) << "\" y1=\""
              << detail::coord(f.py(s.mean[i] - sd_at(i))) << "\" x2=\"" << detail::coord(f.px(s.x[i])) << "\" y2=\""
              << detail::coord(f.py(s.mean[i] + sd_at(i))) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        } else {
            o << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (auto i : idx) o << detail::coord(f.px(s.x[i])) << ',' << detail::coord(f.py(s.mean[i] + sd_at(i))) << ' ';
            for (auto it = idx.rbegin(); it != idx.rend(); ++it)
                o << detail::coord(f.px(s.x[*it])) << ',' << detail::coord(f.py(s.mean[*it] - sd_at(*it))) << ' ';
            o << "\"/>\n";
            o << "<polyline class=\"mean\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (auto i : idx) o << detail::coord(f.px(s.x[i])) << ',' << detail::coord(f.py(s.mean[i])) << ' ';
            o << "\"/>\n";
        }
        for (auto i : idx)
            o << "<circle class=\"point\" cx=\"" << detail::coord(f.px(s.x[i])) << "\" cy=\"" << detail::coord(f.py(s.mean[i]))
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        o << "<text class=\"legend\" x=\"" << detail::coord(f.left + 10) << "\" y=\"" << detail::coord(f.top + 16 + 15.0 * k)
          << "\" font-size=\"12\" fill=\"" << color << "\">" << detail::svg_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

/// Series from aggregate CSVs (value, <metric>_mean, <metric>_std); one series per file.
inline std::vector<Series> sweep_series(const std::vector<CsvTable>& tables, const std::string& metric) {
    std::vector<Series> out;
    for (const auto& t : tables) {
        Series s;
        const auto cv = t.col("value"), cm = t.col(metric + "_mean"), cs = t.col(metric + "_std");
        s.label = t.has("method") ? t.rows[0][t.col("method")] : t.source;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            s.x.push_back(t.num(r, cv));
            s.mean.push_back(t.num(r, cm));
            s.sd.push_back(t.num(r, cs));
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// One series per grid value, averaged over seeds at each epoch.
inline std::vector<Series> timeseries_series(const CsvTable& t, const std::string& metric) {
    const auto cv = t.col("value"), ce = t.col("epoch"), cm = t.col(metric);
    std::map<std::string, std::map<double, std::vector<double>>> groups;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& key = t.rows[r][cv];
        if (!groups.count(key)) order.push_back(key);
        groups[key][t.num(r, ce)].push_back(t.num(r, cm));
    }
    std::vector<Series> out;
    const std::string method = t.has("method") ? t.rows[0][t.col("method")] + " " : "";
    for (const auto& key : order) {
        Series s;
        s.label = method + key;
        for (const auto& [epoch, xs] : groups[key]) {
            double sum = 0, n = 0;
            for (double x : xs)
                if (std::isfinite(x)) sum += x, n += 1;
            const double mean = n > 0 ? sum / n : NAN;
            double ss = 0;
            for (double x : xs)
                if (std::isfinite(x)) ss += (x - mean) * (x - mean);
            s.x.push_back(epoch);
            s.mean.push_back(mean);
            s.sd.push_back(n > 0 ? std::sqrt(ss / n) : NAN);
        }
        out.push_back(std::move(s));
    }
    return out;
}

struct Heatmap {
    std::vector<double> xs, ys;
    /// values[iy][ix]
    std::vector<std::vector<double>> values;
};

/// Rebuilds the regular grid of an x,y,p CSV.
inline Heatmap heatmap_from_table(const CsvTable& t) {
    const auto cx = t.col("x"), cy = t.col("y"), cp = t.col("p");
    std::map<double, std::size_t> xi, yi;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        xi.emplace(t.num(r, cx), 0);
        yi.emplace(t.num(r, cy), 0);
    }
    Heatmap h;
    for (auto& [v, i] : xi) {
        i = h.xs.size();
        h.xs.push_back(v);
    }
    for (auto& [v, i] : yi) {
        i = h.ys.size();
        h.ys.push_back(v);
    }
    if (h.xs.size() < 2 || h.ys.size() < 2) throw ParseError(t.source + ": boundary grid needs at least 2x2 points");
    if (h.xs.size() * h.ys.size() != t.rows.size())
        throw ParseError(t.source + ": rows do not form a full grid (" + std::to_string(h.xs.size()) + " x " +
                         std::to_string(h.ys.size()) + " != " + std::to_string(t.rows.size()) + ")");
    h.values.assign(h.ys.size(), std::vector<double>(h.xs.size(), NAN));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double p = t.num(r, cp);
        if (!(p >= 0.0 && p <= 1.0)) throw ParseError(t.source + ": probability outside [0,1] in row " + std::to_string(r + 2));
        auto& cell = h.values[yi[t.num(r, cy)]][xi[t.num(r, cx)]];
        if (!std::isnan(cell)) throw ParseError(t.source + ": duplicate grid point in row " + std::to_string(r + 2));
        cell = p;
    }
    return h;
}

/// Marching squares at `level`; segments chained into polylines.
inline std::vector<std::vector<Point2>> contour_lines(const Heatmap& h, double level) {
    struct Seg {
        Point2 a, b;
    };
    std::vector<Seg> segs;
    auto lerp = [&](double x0, double y0, double v0, double x1, double y1, double v1) {
        const double t = (level - v0) / (v1 - v0);
        return Point2{x0 + t * (x1 - x0), y0 + t * (y1 - y0)};
    };
    for (std::size_t j = 0; j + 1 < h.ys.size(); ++j)
        for (std::size_t i = 0; i + 1 < h.xs.size(); ++i) {
            const double x0 = h.xs[i], x1 = h.xs[i + 1], y0 = h.ys[j], y1 = h.ys[j + 1];
            const double v00 = h.values[j][i], v10 = h.values[j][i + 1], v11 = h.values[j + 1][i + 1], v01 = h.values[j + 1][i];
            // Edge crossings in order bottom, right, top, left. Each edge is interpolated
            // from its lower corner so neighbouring cells agree bit for bit.
            std::vector<Point2> cross;
            if ((v00 >= level) != (v10 >= level)) cross.push_back(lerp(x0, y0, v00, x1, y0, v10));
            if ((v10 >= level) != (v11 >= level)) cross.push_back(lerp(x1, y0, v10, x1, y1, v11));
            if ((v11 >= level) != (v01 >= level)) cross.push_back(lerp(x0, y1, v01, x1, y1, v11));
            if ((v01 >= level) != (v00 >= level)) cross.push_back(lerp(x0, y0, v00, x0, y1, v01));
            if (cross.size() == 2) {
                segs.push_back({cross[0], cross[1]});
            } else if (cross.size() == 4) {
                // Saddle: pair by the cell-center value.
                const double centre = (v00 + v10 + v11 + v01) / 4.0;
                if ((centre >= level) == (v00 >= level)) {
                    segs.push_back({cross[0], cross[1]});
                    segs.push_back({cross[2], cross[3]});
                } else {
                    segs.push_back({cross[0], cross[3]});
                    segs.push_back({cross[1], cross[2]});
                }
            }
        }
    // Chain segments sharing endpoints (shared edges produce bit-identical crossing points).
    auto key = [](const Point2& p) { return std::make_pair(p.x, p.y); };
    std::multimap<std::pair<double, double>, std::size_t> ends;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        ends.emplace(key(segs[s].a), s);
        ends.emplace(key(segs[s].b), s);
    }
    std::vector<bool> used(segs.size(), false);
    auto take_next = [&](const Point2& p) -> std::optional<Point2> {
        auto range = ends.equal_range(key(p));
        for (auto it = range.first; it != range.second; ++it) {
            const auto s = it->second;
            if (used[s]) continue;
            used[s] = true;
            return key(segs[s].a) == key(p) ? segs[s].b : segs[s].a;
        }
        return std::nullopt;
    };
    std::vector<std::vector<Point2>> lines;
    for (std::size_t s = 0; s < segs.size(); ++s) {
        if (used[s]) continue;
        used[s] = true;
        std::vector<Point2> line{segs[s].a, segs[s].b};
        while (auto nxt = take_next(line.back())) line.push_back(*nxt);
        std::vector<Point2> head;
        Point2 cur = line.front();
        while (auto prv = take_next(cur)) {
            head.push_back(*prv);
            cur = *prv;
        }
        std::reverse(head.begin(), head.end());
        head.insert(head.end(), line.begin(), line.end());
        lines.push_back(std::move(head));
    }
    return lines;
}

/// One rect per grid point (class "cell"), colored blue (p=0) to red (p=1), plus the 0.5 contour.
inline std::string render_heatmap_svg(const Heatmap& h, const PlotOptions& opt) {
    detail::Frame f{h.xs.front(), h.xs.back(), h.ys.front(), h.ys.back()};
    f.width = opt.width;
    f.height = opt.height;
    std::ostringstream o;
    o << detail::svg_open(opt.width, opt.height);
    const double cw = (f.px(h.xs.back()) - f.px(h.xs.front())) / static_cast<double>(h.xs.size() - 1);
    const double ch = (f.py(h.ys.front()) - f.py(h.ys.back())) / static_cast<double>(h.ys.size() - 1);
    o << "<g shape-rendering=\"crispEdges\">\n";
    for (std::size_t j = 0; j < h.ys.size(); ++j)
        for (std::size_t i = 0; i < h.xs.size(); ++i) {
            const double p = h.values[j][i];
            const int r = static_cast<int>(std::lround(255 * p)), b = static_cast<int>(std::lround(255 * (1 - p)));
            const int g = static_cast<int>(std::lround(255 * (1 - std::abs(2 * p - 1)) * 0.8));
            // Cells are centered on grid points and clipped to the frame.
            const double cx = f.px(h.xs[i]), cy = f.py(h.ys[j]);
            const double x0 = std::max(cx - cw / 2, f.px(h.xs.front())), x1 = std::min(cx + cw / 2, f.px(h.xs.back()));
            const double y0 = std::max(cy - ch / 2, f.py(h.ys.back())), y1 = std::min(cy + ch / 2, f.py(h.ys.front()));
            o << "<rect class=\"cell\" x=\"" << detail::coord(x0) << "\" y=\"" << detail::coord(y0) << "\" width=\""
              << detail::coord(x1 - x0) << "\" height=\"" << detail::coord(y1 - y0) << "\" fill=\"rgb(" << r << ',' << g << ','
              << b << ")\"/>\n";
        }
    o << "</g>\n";
    for (const auto& line : contour_lines(h, 0.5)) {
        o << "<polyline class=\"contour\" fill=\"none\" stroke=\"black\" stroke-width=\"2\" points=\"";
        for (const auto& p : line) o << detail::coord(f.px(p.x)) << ',' << detail::coord(f.py(p.y)) << ' ';
        o << "\"/>\n";
    }
    detail::axes(o, f, "x1", "x2", opt.title);
    o << "</svg>\n";
    return o.str();
}

/// Reads `csv_paths` (several only for sweep_curve overlays), validates the schema of `kind`
/// and writes a standalone SVG. Schema problems raise ParseError.
inline void emit_svg_plot(const std::vector<std::string>& csv_paths, PlotKind kind, const std::string& out_path,
                          PlotOptions opt = {}) {
    require(!csv_paths.empty(), "plot needs at least one CSV");
    std::vector<CsvTable> tables;
    for (const auto& p : csv_paths) tables.push_back(read_csv_table(p));
    std::string svg;
    switch (kind) {
        case PlotKind::sweep_curve: {
            if (opt.metric.empty()) opt.metric = "norm_H";
            svg = render_series_svg(sweep_series(tables, opt.metric), "hyperparameter", opt.metric, opt);
            break;
        }
        case PlotKind::boundary_heatmap: {
            if (tables.size() != 1) throw ConfigError("boundary_heatmap takes exactly one CSV");
            svg = render_heatmap_svg(heatmap_from_table(tables[0]), opt);
            break;
        }
        case PlotKind::variance_timeseries: {
            if (opt.metric.empty()) opt.metric = "output_variance";
            std::vector<Series> all;
            for (const auto& t : tables) {
                auto s = timeseries_series(t, opt.metric);
                all.insert(all.end(), s.begin(), s.end());
            }
            svg = render_series_svg(all, "epoch", opt.metric, opt);
            break;
        }
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + out_path);
    out << svg;
    if (!out) throw Error("write failed: " + out_path);
}

}  // namespace lsmix
