#include <gtest/gtest.h>

#include <fstream>

#include "lsmix/diagnostics.hpp"
#include "lsmix/plot.hpp"
#include "lsmix/sweep.hpp"
#include "test_util.hpp"

using namespace lsmix;
using lsmix::testing::TempDir;

namespace {

void put(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST(CsvTable, SchemaErrors) {
    TempDir dir("plot_csv");
    put(dir.file("empty.csv"), "");
    EXPECT_THROW(read_csv_table(dir.file("empty.csv")), ParseError);
    put(dir.file("header.csv"), "value,norm_H_mean,norm_H_std\n");
    EXPECT_THROW(read_csv_table(dir.file("header.csv")), ParseError);
    put(dir.file("ragged.csv"), "a,b\n1,2\n3\n");
    EXPECT_THROW(read_csv_table(dir.file("ragged.csv")), ParseError);
    EXPECT_THROW(read_csv_table(dir.file("missing.csv")), ParseError);
    put(dir.file("ok.csv"), "a,b\n1,nan\n");
    const auto t = read_csv_table(dir.file("ok.csv"));
    EXPECT_TRUE(std::isnan(t.num(0, t.col("b"))));
    EXPECT_THROW(t.col("c"), ParseError);
}

TEST(SweepCurve, SinglePointGetsErrorBar) {
    TempDir dir("plot_one");
    put(dir.file("agg.csv"), "method,value,norm_H_mean,norm_H_std\nlabel_smoothing,0.1,0.02,0.005\n");
    emit_svg_plot({dir.file("agg.csv")}, PlotKind::sweep_curve, dir.file("out.svg"));
    const auto svg = slurp(dir.file("out.svg"));
    EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
    EXPECT_EQ(count(svg, "class=\"errorbar\""), 1u);
    EXPECT_EQ(count(svg, "class=\"point\""), 1u);
    EXPECT_EQ(count(svg, "class=\"band\""), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(SweepCurve, BandsAndOverlayFromRealSweep) {
    TempDir dir("plot_sweep");
    std::vector<std::string> files;
    for (auto m : {Method::weight_decay, Method::label_smoothing}) {
        auto c = default_sweep_config(Recipe::defC1, m);
        c.grid = plan_grid(m, 0.0, 0.1, 4);
        c.seeds = {1, 2};
        c.data.synthetic.n = 100;
        c.data.test_n = 50;
        c.train.epochs = 2;
        c.train.batch_size = 50;
        c.train.diagnostics_every = 1;
        const auto sub = dir.file(to_string(m));
        aggregate_and_write(run_sweep(c), sub);
        files.push_back(sub + "/aggregate.csv");
        emit_svg_plot({sub + "/timeseries.csv"}, PlotKind::variance_timeseries, dir.file(to_string(m) + "_ts.svg"));
        const auto ts = slurp(dir.file(to_string(m) + "_ts.svg"));
        EXPECT_EQ(count(ts, "class=\"mean\""), 4u);
    }
    emit_svg_plot(files, PlotKind::sweep_curve, dir.file("curve.svg"), {"test_error", "errors", 640, 420});
    const auto svg = slurp(dir.file("curve.svg"));
    EXPECT_EQ(count(svg, "class=\"band\""), 2u);
    EXPECT_EQ(count(svg, "class=\"mean\""), 2u);
    EXPECT_EQ(count(svg, "class=\"point\""), 8u);
    EXPECT_NE(svg.find(">weight_decay<"), std::string::npos);
    EXPECT_THROW(emit_svg_plot(files, PlotKind::sweep_curve, dir.file("bad.svg"), {"no_such_metric", "", 640, 420}), ParseError);
    EXPECT_THROW(emit_svg_plot(files, PlotKind::boundary_heatmap, dir.file("bad.svg")), ConfigError);
    EXPECT_THROW(emit_svg_plot({files[0]}, PlotKind::boundary_heatmap, dir.file("bad.svg")), ParseError);
}

TEST(BoundaryHeatmap, HundredByHundredGridWithContour) {
    TempDir dir("plot_heat");
    Vector w(2);
    w << 0.3, 1.0;
    const auto g = boundary_grid(LinearBinaryModel::from_weights(w), Region{-1, 1, -1, 1}, 100);
    write_boundary_csv(g, dir.file("b.csv"));
    emit_svg_plot({dir.file("b.csv")}, PlotKind::boundary_heatmap, dir.file("b.svg"));
    const auto svg = slurp(dir.file("b.svg"));
    EXPECT_EQ(count(svg, "class=\"cell\""), 10000u);
    EXPECT_EQ(count(svg, "class=\"contour\""), 1u);

    const auto h = heatmap_from_table(read_csv_table(dir.file("b.csv")));
    const auto lines = contour_lines(h, 0.5);
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_GE(lines[0].size(), 100u);
    for (const auto& p : lines[0]) EXPECT_NEAR(w(0) * p.x + w(1) * p.y, 0.0, 1e-6);
}

TEST(BoundaryHeatmap, ClosedContourAndSaddle) {
    Heatmap h;
    for (int i = 0; i <= 40; ++i) {
        h.xs.push_back(-1 + i / 20.0);
        h.ys.push_back(-1 + i / 20.0);
    }
    h.values.assign(41, std::vector<double>(41));
    for (int j = 0; j <= 40; ++j)
        for (int i = 0; i <= 40; ++i) h.values[j][i] = std::exp(-(h.xs[i] * h.xs[i] + h.ys[j] * h.ys[j]) * 2.0);
    const auto lines = contour_lines(h, 0.5);
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(lines[0].front().x, lines[0].back().x);
    EXPECT_EQ(lines[0].front().y, lines[0].back().y);
    const double r = std::sqrt(std::log(2.0) / 2.0);
    for (const auto& p : lines[0]) EXPECT_NEAR(std::hypot(p.x, p.y), r, 0.01);

    Heatmap s{{0, 1}, {0, 1}, {{1.0, 0.0}, {0.0, 1.0}}};
    EXPECT_EQ(contour_lines(s, 0.5).size(), 2u);
}

TEST(BoundaryHeatmap, RejectsBadGrids) {
    TempDir dir("plot_badgrid");
    put(dir.file("holes.csv"), "x,y,p\n0,0,0.1\n1,0,0.2\n0,1,0.3\n");
    EXPECT_THROW(heatmap_from_table(read_csv_table(dir.file("holes.csv"))), ParseError);
    put(dir.file("prob.csv"), "x,y,p\n0,0,0.1\n1,0,0.2\n0,1,0.3\n1,1,1.5\n");
    EXPECT_THROW(heatmap_from_table(read_csv_table(dir.file("prob.csv"))), ParseError);
    EXPECT_THROW(parse_plot_kind("pie"), ConfigError);
}
