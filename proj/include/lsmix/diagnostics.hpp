#pragma once

#include "lsmix/core.hpp"
#include "lsmix/losses.hpp"
#include "lsmix/models.hpp"

#include "json.hpp"

#include <functional>
#include <map>

namespace lsmix {

struct ClassVariance {
    int label = 0;
    std::size_t count = 0;
    double total_variance = 0.0;
};

struct VarianceReport {
    double per_class_total_variance = 0.0;
    double target_output_variance = std::numeric_limits<double>::quiet_NaN();
    std::vector<ClassVariance> per_class;
};

namespace detail {

/// Class labels expected for `labels` with k classes: {-1,+1} in binary mode, otherwise 0..k-1.
inline std::vector<int> expected_classes(const std::vector<int>& labels, int k) {
    const bool pm = k == 2 && std::all_of(labels.begin(), labels.end(), [](int y) { return y == -1 || y == 1; });
    if (pm) return {-1, 1};
    std::vector<int> out(static_cast<std::size_t>(k));
    std::iota(out.begin(), out.end(), 0);
    return out;
}

inline int column_of(int label, int k) { return k == 2 && label == -1 ? 0 : label; }

/// Rows grouped by class, erroring on a class without samples.
inline std::map<int, std::vector<Eigen::Index>> rows_by_class(const std::vector<int>& labels, int k) {
    std::map<int, std::vector<Eigen::Index>> rows;
    for (int c : expected_classes(labels, k)) rows[c];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = rows.find(labels[i]);
        if (it == rows.end()) throw ConfigError("label " + std::to_string(labels[i]) + " outside the declared classes");
        it->second.push_back(static_cast<Eigen::Index>(i));
    }
    for (const auto& [c, r] : rows)
        if (r.empty()) throw ConfigError("class " + std::to_string(c) + " has no samples");
    return rows;
}

/// Trace of the population covariance of the selected rows, with optional row weights (summing to 1).
inline double total_variance(const Matrix& v, const std::vector<Eigen::Index>& rows, const std::vector<double>* weights = nullptr) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(v.cols());
    const double uniform_w = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) mean += (weights ? (*weights)[r] : uniform_w) * v.row(rows[r]);
    double tv = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) tv += (weights ? (*weights)[r] : uniform_w) * (v.row(rows[r]) - mean).squaredNorm();
    return tv;
}

inline void check_simplex(const Matrix& probs, const char* who, double tol = 1e-9) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (!probs.row(i).allFinite() || probs.row(i).minCoeff() < -tol || std::abs(probs.row(i).sum() - 1.0) > tol)
            throw NumericError(std::string(who) + ": row " + std::to_string(i) + " is not on the probability simplex");
    }
}

}  // namespace detail

/// Mean over classes of Tr(population covariance of the vectors in that class).
inline VarianceReport per_class_total_variance(const Matrix& vectors, const std::vector<int>& labels, int k) {
    require(static_cast<std::size_t>(vectors.rows()) == labels.size(), "per_class_total_variance: size mismatch");
    VarianceReport rep;
    double sum = 0.0;
    for (const auto& [c, rows] : detail::rows_by_class(labels, k)) {
        const double tv = detail::total_variance(vectors, rows);
        rep.per_class.push_back({c, rows.size(), tv});
        sum += tv;
    }
    rep.per_class_total_variance = sum / static_cast<double>(rep.per_class.size());
    return rep;
}

/// Mean over classes y of the variance of P(y | x) across samples labeled y.
inline double target_class_output_variance(const Matrix& probs, const std::vector<int>& labels) {
    require(static_cast<std::size_t>(probs.rows()) == labels.size(), "target_class_output_variance: size mismatch");
    detail::check_simplex(probs, "target_class_output_variance");
    const int k = static_cast<int>(probs.cols());
    double sum = 0.0;
    const auto groups = detail::rows_by_class(labels, k);
    for (const auto& [c, rows] : groups) {
        const Matrix col = probs.col(detail::column_of(c, k));
        sum += detail::total_variance(col, rows);
    }
    return sum / static_cast<double>(groups.size());
}

/// Both variance metrics for a probability matrix.
inline VarianceReport output_variance_report(const Matrix& probs, const std::vector<int>& labels) {
    auto rep = per_class_total_variance(probs, labels, static_cast<int>(probs.cols()));
    rep.target_output_variance = target_class_output_variance(probs, labels);
    return rep;
}

struct WeightNormSplit {
    double norm_L = 0.0;
    double norm_H = 0.0;
    /// |w_0| / ||w_{1..d-1}||; +inf with `ratio_infinite` set when the denominator is zero.
    double ratio_first = 0.0;
    bool ratio_infinite = false;
};

inline WeightNormSplit weight_norm_split(const Vector& w, const std::vector<std::size_t>& low_dims) {
    std::vector<bool> in_l(static_cast<std::size_t>(w.size()), false);
    for (auto j : low_dims) {
        require(j < in_l.size(), "weight_norm_split: index outside [0,d)");
        in_l[j] = true;
    }
    double l2 = 0.0, h2 = 0.0;
    for (Eigen::Index j = 0; j < w.size(); ++j) (in_l[static_cast<std::size_t>(j)] ? l2 : h2) += w(j) * w(j);
    WeightNormSplit out;
    out.norm_L = std::sqrt(l2);
    out.norm_H = std::sqrt(h2);
    const double rest = w.size() > 1 ? w.tail(w.size() - 1).norm() : 0.0;
    const double first = w.size() > 0 ? std::abs(w(0)) : 0.0;
    if (rest == 0.0) {
        out.ratio_first = std::numeric_limits<double>::infinity();
        out.ratio_infinite = true;
    } else {
        out.ratio_first = first / rest;
    }
    return out;
}

// Jensen gap for a scalar convex function with curvature bounds.

struct ScalarDistribution {
    std::vector<double> values;
    std::vector<double> probs;

    void validate() const {
        require(!values.empty() && values.size() == probs.size(), "scalar distribution needs matching values and probs");
        double total = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            require(std::isfinite(values[i]), "scalar distribution value must be finite");
            require(probs[i] >= 0.0, "scalar distribution probabilities must be non-negative");
            total += probs[i];
        }
        require(std::abs(total - 1.0) <= 1e-12, "scalar distribution probabilities must sum to 1");
    }
    double mean() const {
        double m = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
        return m;
    }
    double variance() const {
        const double m = mean();
        double v = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) v += probs[i] * (values[i] - m) * (values[i] - m);
        return v;
    }
};

/// phi with claimed bounds gamma1 <= phi'' <= gamma2. When `second` is set the bounds are audited.
struct ConvexScalar {
    std::function<double(double)> phi;
    std::function<double(double)> second;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
};

struct JensenResult {
    double gap = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double variance = 0.0;
    bool pass = false;
};

/// Extremes of f on a uniform grid over [lo, hi] (endpoints included).
inline std::pair<double, double> scan_extremes(const std::function<double(double)>& f, double lo, double hi,
                                               std::size_t points = 2001) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (std::size_t i = 0; i < points; ++i) {
        const double x = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const double v = f(x);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    return {mn, mx};
}

inline JensenResult jensen_gap_check(const ConvexScalar& fn, const ScalarDistribution& dist) {
    dist.validate();
    require(static_cast<bool>(fn.phi), "jensen_gap_check: phi is required");
    require(fn.gamma1 >= 0.0 && fn.gamma1 <= fn.gamma2, "jensen_gap_check: need 0 <= gamma1 <= gamma2");
    if (fn.second) {
        const auto [lo, hi] = std::minmax_element(dist.values.begin(), dist.values.end());
        const auto [mn, mx] = scan_extremes(fn.second, *lo, *hi);
        if (mn < fn.gamma1 * (1.0 - 1e-9) - 1e-12 || mx > fn.gamma2 * (1.0 + 1e-9) + 1e-12)
            throw ConfigError("jensen_gap_check: curvature bounds [" + fmt17(fn.gamma1) + ", " + fmt17(fn.gamma2) +
                              "] do not hold on the support hull (observed [" + fmt17(mn) + ", " + fmt17(mx) + "])");
    }
    JensenResult r;
    double e_phi = 0.0;
    for (std::size_t i = 0; i < dist.values.size(); ++i) e_phi += dist.probs[i] * fn.phi(dist.values[i]);
    r.gap = e_phi - fn.phi(dist.mean());
    r.variance = dist.variance();
    r.lower = 0.5 * fn.gamma1 * r.variance;
    r.upper = 0.5 * fn.gamma2 * r.variance;
    r.pass = r.gap >= r.lower - 1e-10 && r.gap <= r.upper + 1e-10;
    return r;
}

// Lower-bound certificates: loss >= OPT + C * variance term.

struct Certificate {
    std::string kind;
    double loss_value = 0.0;
    double opt_value = 0.0;
    double constant_C = 0.0;
    double variance_term = 0.0;
    double slack = 0.0;
    bool satisfied = false;
    /// Mixup only: brute-force minimum over all predictors (groups coincident mixed points).
    double grouped_opt_value = std::numeric_limits<double>::quiet_NaN();
};

inline Certificate finish_certificate(std::string kind, double loss, double opt, double c, double var) {
    Certificate cert;
    cert.kind = std::move(kind);
    cert.loss_value = loss;
    cert.opt_value = opt;
    cert.constant_C = c;
    cert.variance_term = var;
    cert.slack = loss - (opt + c * var);
    cert.satisfied = cert.slack >= -1e-9;
    return cert;
}

/// `outputs` row j is g(x_j) on the k-simplex. C = alpha/(2k): the smoothed target puts at least
/// alpha/k on every class and probabilities are at most 1, which lower-bounds the curvature.
inline Certificate ls_lower_bound_certificate(const Matrix& outputs, const FiniteDistribution& pi, double alpha, int k) {
    pi.validate();
    require(alpha >= 0.0 && alpha <= 1.0, "ls certificate: alpha must lie in [0,1]");
    require(outputs.rows() == static_cast<Eigen::Index>(pi.m()) && outputs.cols() == k,
            "ls certificate: outputs must be m x k");
    require(pi.k == k, "ls certificate: distribution class count differs from k");
    detail::check_simplex(outputs, "ls certificate");
    const double opt = opt_ls_value(pi, alpha, k);
    double loss = 0.0;
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < pi.m(); ++j) {
        const int y = pi.class_index(j);
        rows[static_cast<std::size_t>(y)].push_back(static_cast<Eigen::Index>(j));
        double lj = 0.0;
        for (int c = 0; c < k; ++c) {
            const double q = (c == y ? 1.0 - alpha : 0.0) + alpha / k;
            if (q > 0.0) lj -= q * std::log(outputs(static_cast<Eigen::Index>(j), c));
        }
        loss += pi.probs[j] * lj;
    }
    const auto mass = pi.class_mass();
    double var = 0.0;
    for (int c = 0; c < k; ++c) {
        const auto& r = rows[static_cast<std::size_t>(c)];
        std::vector<double> w;
        for (auto j : r) w.push_back(pi.probs[static_cast<std::size_t>(j)] / mass[static_cast<std::size_t>(c)]);
        var += mass[static_cast<std::size_t>(c)] * detail::total_variance(outputs, r, &w);
    }
    return finish_certificate("label_smoothing", loss, opt, alpha / (2.0 * k), var);
}

/// Predictor mapping N x d points to N x k probabilities.
using BatchPredictor = std::function<Matrix(const Matrix&)>;

/// Binary only. The loss splits into (y1, y2, lambda) slices, each strongly convex in g with
/// curvature >= min(lambda, 1-lambda) per coordinate; C = min over the grid of min(lambda,1-lambda)/(2k).
/// OPT is the sum of per-slice optima, which equals opt_mixup_value whenever mixed points of
/// different slices with different targets never coincide; the grouped value is recorded as well.
inline Certificate mixup_lower_bound_certificate(const BatchPredictor& g, const FiniteDistribution& pi, const LambdaGrid& grid) {
    pi.validate();
    grid.validate();
    if (pi.k != 2) throw ModeError("mixup certificate: only the two-class case has a curvature bound on every slice");
    double cmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
        if (grid.weights[i] == 0.0) continue;
        const double lam = grid.points[i];
        if (lam <= 0.0 || lam >= 1.0)
            throw ConfigError("mixup certificate: lambda grid puts weight on " + fmt17(lam) + "; endpoints 0 and 1 are excluded");
        cmin = std::min(cmin, std::min(lam, 1.0 - lam));
    }
    const int k = 2;
    const auto s = enumerate_mixed_support(pi, grid);
    const Matrix out = g(s.points);
    require(out.rows() == s.points.rows() && out.cols() == k, "mixup certificate: predictor must return N x 2 probabilities");
    detail::check_simplex(out, "mixup certificate");
    double loss = 0.0, opt = 0.0;
    std::map<std::tuple<int, int, std::size_t>, std::vector<Eigen::Index>> slices;
    for (std::size_t r = 0; r < s.mass.size(); ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        double lr = 0.0, hr = 0.0;
        for (int c = 0; c < k; ++c) {
            const double t = s.targets(ri, c);
            if (t > 0.0) lr -= t * std::log(out(ri, c));
            hr -= xlogx(t);
        }
        loss += s.mass[r] * lr;
        opt += s.mass[r] * hr;
        slices[{s.label1[r], s.label2[r], s.grid_index[r]}].push_back(ri);
    }
    double var = 0.0;
    for (const auto& [key, rows] : slices) {
        double m = 0.0;
        for (auto r : rows) m += s.mass[static_cast<std::size_t>(r)];
        if (m <= 0.0) continue;
        std::vector<double> w;
        for (auto r : rows) w.push_back(s.mass[static_cast<std::size_t>(r)] / m);
        var += m * detail::total_variance(out, rows, &w);
    }
    auto cert = finish_certificate("mixup", loss, opt, cmin / (2.0 * k), var);
    cert.grouped_opt_value = opt_mixup_value(pi, grid);
    return cert;
}

/// Adapts a binary linear weight vector to a BatchPredictor.
inline BatchPredictor linear_predictor(const Vector& w) {
    return [w](const Matrix& x) {
        Matrix p(x.rows(), 2);
        const Vector z = x * w;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            p(i, 1) = sigmoid(z(i));
            p(i, 0) = sigmoid(-z(i));
        }
        return p;
    };
}

// Decision-boundary grids.

struct Region {
    double x_min = -1.0, x_max = 1.0, y_min = -1.0, y_max = 1.0;
};

struct BoundaryGrid {
    std::vector<double> xs;
    std::vector<double> ys;
    /// probs(r, c) = P(y=+1 | (xs[c], ys[r])), row-major with y outer.
    Matrix probs;
    /// atan2(|w2|, |w1|) in degrees for linear models, NaN otherwise.
    double angle_deg = std::numeric_limits<double>::quiet_NaN();
};

template <class Model>
BoundaryGrid boundary_grid(const Model& model, const Region& region, std::size_t resolution) {
    if (model.input_dim() != 2) throw ModeError("boundary_grid requires a 2-D model");
    require(resolution >= 2, "boundary_grid: resolution must be at least 2");
    require(region.x_min < region.x_max && region.y_min < region.y_max, "boundary_grid: empty region");
    BoundaryGrid g;
    const auto n = resolution;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        g.xs.push_back(region.x_min + t * (region.x_max - region.x_min));
        g.ys.push_back(region.y_min + t * (region.y_max - region.y_min));
    }
    Matrix pts(static_cast<Eigen::Index>(n * n), 2);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            pts(static_cast<Eigen::Index>(r * n + c), 0) = g.xs[c];
            pts(static_cast<Eigen::Index>(r * n + c), 1) = g.ys[r];
        }
    const Matrix p = predict_proba(model, model.forward(pts).logits);
    g.probs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            g.probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = p(static_cast<Eigen::Index>(r * n + c), 1);
    if constexpr (std::is_same_v<Model, LinearBinaryModel>) {
        const auto w = model.weights();
        g.angle_deg = std::atan2(std::abs(w(1)), std::abs(w(0))) * 180.0 / M_PI;
    }
    return g;
}

/// CSV x,y,p with y as the outer loop.
inline void write_boundary_csv(const BoundaryGrid& g, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write file: " + path);
    out << "x,y,p\n";
    for (std::size_t r = 0; r < g.ys.size(); ++r)
        for (std::size_t c = 0; c < g.xs.size(); ++c)
            out << fmt17(g.xs[c]) << ',' << fmt17(g.ys[r]) << ','
                << fmt17(g.probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) << '\n';
    if (!out) throw ParseError("write failed: " + path);
}

// JSON views. Non-finite numbers become null.

namespace detail {

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json to_json(const VarianceReport& r) {
    nlohmann::json j;
    j["per_class_total_variance"] = detail::num(r.per_class_total_variance);
    j["target_output_variance"] = detail::num(r.target_output_variance);
    j["per_class"] = nlohmann::json::array();
    for (const auto& c : r.per_class)
        j["per_class"].push_back({{"label", c.label}, {"count", c.count}, {"total_variance", detail::num(c.total_variance)}});
    return j;
}

inline nlohmann::json to_json(const Certificate& c) {
    return {{"kind", c.kind},
            {"loss_value", detail::num(c.loss_value)},
            {"opt_value", detail::num(c.opt_value)},
            {"grouped_opt_value", detail::num(c.grouped_opt_value)},
            {"constant_C", detail::num(c.constant_C)},
            {"variance_term", detail::num(c.variance_term)},
            {"slack", detail::num(c.slack)},
            {"satisfied", c.satisfied}};
}

}  // namespace lsmix
