#include "gsmforge/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsmforge/csv.hpp"

namespace gsmforge {

namespace {

constexpr int kWidth = 640, kHeight = 480;
constexpr int kLeft = 64, kRight = 24, kTop = 28, kBottom = 48;

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Range {
    double lo = 0.0, hi = 1.0;
    void expand(double v) {
        if (!std::isfinite(v)) return;
        if (empty) {
            lo = hi = v;
            empty = false;
        } else {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void finalize() {
        if (empty) {
            lo = 0.0;
            hi = 1.0;
        } else if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
    bool empty = true;
};

struct SvgCanvas {
    std::string body;
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;

    double px(double x) const {
        return kLeft + (x - xlo) / (xhi - xlo) * (kWidth - kLeft - kRight);
    }
    double py(double y) const {
        return kHeight - kBottom - (y - ylo) / (yhi - ylo) * (kHeight - kTop - kBottom);
    }
    void line(double x1, double y1, double x2, double y2, const char* style) {
        body += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) +
                "\" y2=\"" + fmt(y2) + "\" " + style + "/>\n";
    }
    void text(double x, double y, const std::string& s, const char* anchor = "middle") {
        body += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"12\" font-family=\"monospace\" text-anchor=\"" +
                anchor + "\">" + s + "</text>\n";
    }
    void circle(double cx, double cy, double r, const char* fill) {
        body += "<circle cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" r=\"" + fmt(r) +
                "\" fill=\"" + fill + "\"/>\n";
    }
    void rect(double x, double y, double w, double h, const std::string& fill) {
        body += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) +
                "\" height=\"" + fmt(h) + "\" fill=\"" + fill + "\"/>\n";
    }
    void axes(const std::string& xlabel, const std::string& ylabel, const std::string& title) {
        const char* st = "stroke=\"black\" stroke-width=\"1\"";
        line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, st);
        line(kLeft, kTop, kLeft, kHeight - kBottom, st);
        text((kLeft + kWidth - kRight) / 2.0, kHeight - 12, xlabel);
        text(16, kTop - 8, ylabel, "start");
        text((kLeft + kWidth - kRight) / 2.0, 16, title);
        text(kLeft, kHeight - kBottom + 16, fmt(xlo));
        text(kWidth - kRight, kHeight - kBottom + 16, fmt(xhi));
        text(kLeft - 6, kHeight - kBottom + 4, fmt(ylo), "end");
        text(kLeft - 6, kTop + 4, fmt(yhi), "end");
    }
    std::string finish() const {
        return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
               "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
               std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) +
               "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " + std::to_string(kHeight) +
               "\">\n<rect x=\"0\" y=\"0\" width=\"" + std::to_string(kWidth) + "\" height=\"" +
               std::to_string(kHeight) + "\" fill=\"white\"/>\n" + body + "</svg>\n";
    }
};

void require_columns(const CsvTable& t, const std::vector<std::string>& needed,
                     const std::string& kind) {
    std::string missing;
    for (const std::string& c : needed)
        if (t.col(c) < 0) missing += (missing.empty() ? "" : ", ") + c;
    if (!missing.empty())
        throw std::runtime_error("csv does not match schema for " + kind +
                                 "; missing columns: " + missing);
}

std::string heat_color(double v) {
    // blue -> red through white, v in [0,1]
    double r = v, b = 1.0 - v;
    int ri = static_cast<int>(std::lround(255 * (0.25 + 0.75 * r)));
    int gi = static_cast<int>(std::lround(255 * (0.25 + 0.5 * (1.0 - std::fabs(v - 0.5) * 2.0))));
    int bi = static_cast<int>(std::lround(255 * (0.25 + 0.75 * b)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", ri, gi, bi);
    return buf;
}

void plot_xy(SvgCanvas& c, const std::vector<double>& xs, const std::vector<double>& ys,
             bool markers) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(ys[i])) continue;
        pts += fmt(c.px(xs[i])) + "," + fmt(c.py(ys[i])) + " ";
    }
    if (!pts.empty())
        c.body += "<polyline points=\"" + pts +
                  "\" fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"1.5\"/>\n";
    if (markers)
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (std::isfinite(ys[i])) c.circle(c.px(xs[i]), c.py(ys[i]), 3.0, "#1f5fbf");
}

}  // namespace

void emit_plot(const std::string& csv_path, const std::string& kind,
               const std::string& out_path) {
    CsvTable t = read_csv(csv_path);
    SvgCanvas canvas;

    if (kind == "lcs_trajectory") {
        require_columns(t, {"t", "alpha", "objective", "lcs", "residual_norm", "delta_linf"},
                        kind);
        int ct = t.col("t"), cl = t.col("lcs");
        std::vector<double> xs, ys;
        Range rx, ry;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            double x = t.num(i, ct);
            double y = t.num(i, cl);
            xs.push_back(x);
            ys.push_back(y);
            rx.expand(x);
            ry.expand(y);
        }
        rx.finalize();
        ry.finalize();
        canvas.xlo = rx.lo;
        canvas.xhi = rx.hi;
        canvas.ylo = ry.lo;
        canvas.yhi = ry.hi;
        canvas.axes("t", "LCS", "lazy cosine similarity");
        plot_xy(canvas, xs, ys, t.rows.size() <= 64);
    } else if (kind == "sweep_heatmap") {
        require_columns(t, {"epsilon", "steps", "mean_psnr"}, kind);
        int ce = t.col("epsilon"), cs = t.col("steps"), cp = t.col("mean_psnr");
        std::set<double> eps, steps;
        Range rv;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            eps.insert(t.num(i, ce));
            steps.insert(t.num(i, cs));
            rv.expand(t.num(i, cp));
        }
        rv.finalize();
        canvas.xlo = 0;
        canvas.xhi = std::max<std::size_t>(1, steps.size());
        canvas.ylo = 0;
        canvas.yhi = std::max<std::size_t>(1, eps.size());
        canvas.axes("steps", "epsilon", "mean target PSNR (dB)");
        std::vector<double> ev(eps.begin(), eps.end()), sv(steps.begin(), steps.end());
        double cw = (kWidth - kLeft - kRight) / canvas.xhi;
        double ch = (kHeight - kTop - kBottom) / canvas.yhi;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            std::size_t xi = std::lower_bound(sv.begin(), sv.end(), t.num(i, cs)) - sv.begin();
            std::size_t yi = std::lower_bound(ev.begin(), ev.end(), t.num(i, ce)) - ev.begin();
            double v = t.num(i, cp);
            double u = (v - rv.lo) / (rv.hi - rv.lo);
            canvas.rect(kLeft + xi * cw, kHeight - kBottom - (yi + 1) * ch, cw, ch, heat_color(u));
            canvas.text(kLeft + xi * cw + cw / 2, kHeight - kBottom - yi * ch - ch / 2, fmt(v));
        }
        for (std::size_t i = 0; i < sv.size(); ++i)
            canvas.text(kLeft + i * cw + cw / 2, kHeight - kBottom + 16, fmt(sv[i]));
        for (std::size_t i = 0; i < ev.size(); ++i)
            canvas.text(kLeft - 6, kHeight - kBottom - i * ch - ch / 2, fmt(ev[i]), "end");
    } else if (kind == "ablation_curve") {
        require_columns(t, {"k", "mean_psnr"}, kind);
        int ck = t.col("k"), cp = t.col("mean_psnr");
        std::vector<std::pair<double, double>> pts;
        Range rx, ry;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            pts.emplace_back(t.num(i, ck), t.num(i, cp));
            rx.expand(pts.back().first);
            ry.expand(pts.back().second);
        }
        std::sort(pts.begin(), pts.end());
        rx.finalize();
        ry.finalize();
        canvas.xlo = rx.lo;
        canvas.xhi = rx.hi;
        canvas.ylo = ry.lo;
        canvas.yhi = ry.hi;
        canvas.axes("decay factor k", "mean PSNR (dB)", "decay-factor ablation");
        std::vector<double> xs, ys;
        for (auto& [x, y] : pts) {
            xs.push_back(x);
            ys.push_back(y);
        }
        plot_xy(canvas, xs, ys, true);
    } else {
        throw std::runtime_error("unknown plot kind: " + kind);
    }

    std::FILE* f = std::fopen(out_path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + out_path + " for writing");
    std::string svg = canvas.finish();
    std::fwrite(svg.data(), 1, svg.size(), f);
    std::fclose(f);
}

}  // namespace gsmforge
