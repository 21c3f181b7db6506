#pragma once

#include "lsmix/core.hpp"
#include "lsmix/datagen.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

namespace lsmix {

/// Distribution of the Mixup weight lambda on [0,1].
struct MixingDistribution {
    enum class Kind { beta, point_mass, uniform01 };

    Kind kind = Kind::point_mass;
    double a = 1.0;
    double b = 1.0;
    double point = 1.0;

    static MixingDistribution beta(double a, double b) { return {Kind::beta, a, b, 0.0}; }
    static MixingDistribution point_mass(double lambda) { return {Kind::point_mass, 1.0, 1.0, lambda}; }
    static MixingDistribution uniform() { return {Kind::uniform01, 1.0, 1.0, 0.0}; }

    /// Beta(alpha, alpha), with alpha = 0 meaning plain ERM (all weight on the first sample).
    static MixingDistribution symmetric_beta_or_erm(double alpha) {
        return alpha > 0.0 ? beta(alpha, alpha) : point_mass(1.0);
    }

    void validate() const {
        if (kind == Kind::beta) require(a > 0.0 && b > 0.0, "Beta parameters must be positive");
        if (kind == Kind::point_mass) require(point >= 0.0 && point <= 1.0, "point mass must lie in [0,1]");
    }

    double mean() const {
        switch (kind) {
            case Kind::beta: return a / (a + b);
            case Kind::uniform01: return 0.5;
            case Kind::point_mass: break;
        }
        return point;
    }

    double variance() const {
        switch (kind) {
            case Kind::beta: return a * b / ((a + b) * (a + b) * (a + b + 1.0));
            case Kind::uniform01: return 1.0 / 12.0;
            case Kind::point_mass: break;
        }
        return 0.0;
    }

    std::string describe() const {
        switch (kind) {
            case Kind::beta: return "Beta(" + fmt17(a) + "," + fmt17(b) + ")";
            case Kind::uniform01: return "Uniform(0,1)";
            case Kind::point_mass: break;
        }
        return "PointMass(" + fmt17(point) + ")";
    }
};

struct LossSpec {
    enum class Kind { ce, ls, mixup };

    Kind kind = Kind::ce;
    double alpha = 0.0;
    MixingDistribution mixing = MixingDistribution::point_mass(1.0);
    /// Coefficient of the explicit beta/2 ||w||^2 penalty (applied by callers that own the weights).
    double l2_beta = 0.0;
    double clamp_eps = 1e-12;

    static LossSpec ce(double l2 = 0.0) { return {Kind::ce, 0.0, MixingDistribution::point_mass(1.0), l2}; }
    static LossSpec label_smoothing(double alpha, double l2 = 0.0) {
        return {Kind::ls, alpha, MixingDistribution::point_mass(1.0), l2};
    }
    static LossSpec mixup(MixingDistribution dist, double l2 = 0.0) { return {Kind::mixup, 0.0, dist, l2}; }

    void validate() const {
        require(alpha >= 0.0 && alpha <= 1.0, "label smoothing alpha must lie in [0,1]");
        require(l2_beta >= 0.0, "l2_beta must be non-negative");
        require(clamp_eps > 0.0 && clamp_eps < 0.5, "clamp eps must lie in (0, 0.5)");
        mixing.validate();
    }

    std::string describe() const {
        std::string s;
        switch (kind) {
            case Kind::ce: s = "CE"; break;
            case Kind::ls: s = "LS(" + fmt17(alpha) + ")"; break;
            case Kind::mixup: s = "Mixup(" + mixing.describe() + ")"; break;
        }
        if (l2_beta > 0.0) s += "+L2(" + fmt17(l2_beta) + ")";
        return s;
    }
};

/// Finitely supported distribution over (x, y). Binary: labels in {-1,+1}, k = 2.
struct FiniteDistribution {
    Matrix points;
    std::vector<int> labels;
    std::vector<double> probs;
    int k = 2;

    std::size_t m() const { return labels.size(); }
    std::size_t d() const { return static_cast<std::size_t>(points.cols()); }

    bool binary() const {
        return k == 2 && std::all_of(labels.begin(), labels.end(), [](int y) { return y == -1 || y == 1; });
    }

    /// Class index in [0,k): binary -1 -> 0, +1 -> 1.
    int class_index(std::size_t j) const { return binary() ? (labels[j] > 0 ? 1 : 0) : labels[j]; }

    std::vector<double> class_mass() const {
        std::vector<double> mass(static_cast<std::size_t>(k), 0.0);
        for (std::size_t j = 0; j < m(); ++j) mass[static_cast<std::size_t>(class_index(j))] += probs[j];
        return mass;
    }

    void validate() const {
        require(m() >= 1, "finite distribution needs at least one support point");
        require(static_cast<std::size_t>(points.rows()) == m() && probs.size() == m(),
                "finite distribution arrays have inconsistent lengths");
        double total = 0.0;
        for (double p : probs) {
            require(p >= 0.0, "finite distribution probabilities must be non-negative");
            total += p;
        }
        require(std::abs(total - 1.0) <= 1e-12, "finite distribution probabilities must sum to 1");
        const bool pm = binary();
        for (int y : labels) {
            if (!pm) require(y >= 0 && y < k, "finite distribution label outside [0,k)");
        }
        for (double mass : class_mass()) require(mass > 0.0, "every class needs positive mass");
    }

    /// Uniform distribution over the rows of a dataset.
    static FiniteDistribution empirical(const Dataset& ds) {
        FiniteDistribution pi;
        pi.points = ds.features;
        pi.labels = ds.labels;
        pi.probs.assign(ds.n(), 1.0 / static_cast<double>(ds.n()));
        pi.k = ds.k;
        return pi;
    }
};

/// CSV with header x0..x{d-1},label,probability.
inline FiniteDistribution read_finite_distribution_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty CSV");
    const auto header = split(trim(line), ',');
    if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "probability")
        throw ParseError(path + ": header must end with 'label,probability'");
    const std::size_t d = header.size() - 2;
    std::vector<double> values;
    FiniteDistribution pi;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto cells = split(t, ',');
        if (cells.size() != d + 2) throw ParseError(path + ": row with wrong column count");
        for (std::size_t j = 0; j < d; ++j) values.push_back(parse_double(cells[j]));
        pi.labels.push_back(static_cast<int>(parse_double(cells[d])));
        pi.probs.push_back(parse_double(cells[d + 1]));
    }
    if (pi.labels.empty()) throw ParseError(path + ": no data rows");
    pi.points = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(pi.labels.size()), static_cast<Eigen::Index>(d));
    const bool pm = std::all_of(pi.labels.begin(), pi.labels.end(), [](int y) { return y == -1 || y == 1; });
    pi.k = pm ? 2 : *std::max_element(pi.labels.begin(), pi.labels.end()) + 1;
    pi.validate();
    return pi;
}

namespace detail {

/// log of a Gamma(shape, 1) draw (Marsaglia-Tsang; shapes below 1 use the U^{1/a} boost).
inline double log_gamma_draw(double shape, Rng& rng) {
    if (shape < 1.0) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        return log_gamma_draw(shape + 1.0, rng) + std::log(u) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        const double x = standard_normal(rng);
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
    }
}

}  // namespace detail

inline double sample_lambda(const MixingDistribution& dist, Rng& rng) {
    switch (dist.kind) {
        case MixingDistribution::Kind::point_mass: return dist.point;
        case MixingDistribution::Kind::uniform01: return uniform01(rng);
        case MixingDistribution::Kind::beta: break;
    }
    const double la = detail::log_gamma_draw(dist.a, rng);
    const double lb = detail::log_gamma_draw(dist.b, rng);
    // X/(X+Y) evaluated in log space so tiny shapes cannot produce 0/0.
    return 1.0 / (1.0 + std::exp(lb - la));
}

/// Quadrature over lambda: nodes in [0,1] with non-negative weights summing to 1.
struct LambdaGrid {
    std::vector<double> points;
    std::vector<double> weights;

    static LambdaGrid point_mass(double lambda) { return {{lambda}, {1.0}}; }

    void validate() const {
        require(!points.empty() && points.size() == weights.size(), "lambda grid needs matching nodes and weights");
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            require(points[i] >= 0.0 && points[i] <= 1.0, "lambda grid node outside [0,1]");
            require(weights[i] >= 0.0, "lambda grid weight must be non-negative");
            total += weights[i];
        }
        require(std::abs(total - 1.0) <= 1e-12, "lambda grid weights must sum to 1");
    }
};

/// Midpoint nodes (j + 1/2)/count weighted by the density and renormalized; the endpoints 0 and 1
/// are never nodes, so Beta densities with shape < 1 stay finite.
inline LambdaGrid make_lambda_grid(const MixingDistribution& dist, std::size_t count = 129) {
    dist.validate();
    if (dist.kind == MixingDistribution::Kind::point_mass) return LambdaGrid::point_mass(dist.point);
    require(count >= 1, "lambda grid needs at least one node");
    const double a = dist.kind == MixingDistribution::Kind::beta ? dist.a : 1.0;
    const double b = dist.kind == MixingDistribution::Kind::beta ? dist.b : 1.0;
    LambdaGrid g;
    std::vector<double> logw;
    for (std::size_t j = 0; j < count; ++j) {
        const double lam = (static_cast<double>(j) + 0.5) / static_cast<double>(count);
        g.points.push_back(lam);
        logw.push_back((a - 1.0) * std::log(lam) + (b - 1.0) * std::log1p(-lam));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (double lw : logw) {
        g.weights.push_back(std::exp(lw - top));
        total += g.weights.back();
    }
    for (auto& w : g.weights) w /= total;
    // Re-normalize once more so the sum is 1 to the last ulp the validator can see.
    const double s = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
    for (auto& w : g.weights) w /= s;
    return g;
}

/// Labels of a batch. For Mixup batches `secondary` holds the partner labels and `lambda` the
/// weight on `primary`.
struct Targets {
    std::vector<int> primary;
    std::vector<int> secondary;
    double lambda = 1.0;

    static Targets of(std::vector<int> labels) { return {std::move(labels), {}, 1.0}; }
    bool mixed() const { return !secondary.empty(); }
    std::size_t size() const { return primary.size(); }
};

struct MixedBatch {
    Matrix features;
    Targets targets;
};

/// Z = lambda*X1 + (1-lambda)*X2 with targets (Y1, Y2, lambda).
inline MixedBatch mix_pairs(const Matrix& x1, const std::vector<int>& y1, const Matrix& x2,
                            const std::vector<int>& y2, double lambda) {
    if (x1.rows() != x2.rows() || x1.cols() != x2.cols() || y1.size() != y2.size() ||
        static_cast<std::size_t>(x1.rows()) != y1.size())
        throw ConfigError("mix_pairs: batch shapes do not match");
    require(lambda >= 0.0 && lambda <= 1.0, "mix_pairs: lambda outside [0,1]");
    MixedBatch out;
    out.features = lambda * x1 + (1.0 - lambda) * x2;
    out.targets = {y1, y2, lambda};
    return out;
}

namespace detail {

/// Soft target for class +1 of a binary row.
inline double binary_soft_target(const Targets& t, std::size_t i, const LossSpec& spec) {
    const double p1 = t.primary[i] > 0 ? 1.0 : 0.0;
    switch (spec.kind) {
        case LossSpec::Kind::ce: return p1;
        case LossSpec::Kind::ls: return p1 > 0.0 ? 1.0 - spec.alpha / 2.0 : spec.alpha / 2.0;
        case LossSpec::Kind::mixup: break;
    }
    if (!t.mixed()) return p1;
    const double p2 = t.secondary[i] > 0 ? 1.0 : 0.0;
    return t.lambda * p1 + (1.0 - t.lambda) * p2;
}

inline void multiclass_soft_target(const Targets& t, std::size_t i, const LossSpec& spec, int k, double* q) {
    std::fill(q, q + k, 0.0);
    const int y = t.primary[i];
    if (y < 0 || y >= k) throw ConfigError("label " + std::to_string(y) + " outside [0,k)");
    switch (spec.kind) {
        case LossSpec::Kind::ce: q[y] = 1.0; return;
        case LossSpec::Kind::ls:
            for (int c = 0; c < k; ++c) q[c] = spec.alpha / k;
            q[y] += 1.0 - spec.alpha;
            return;
        case LossSpec::Kind::mixup: break;
    }
    if (!t.mixed()) {
        q[y] = 1.0;
        return;
    }
    const int y2 = t.secondary[i];
    if (y2 < 0 || y2 >= k) throw ConfigError("label " + std::to_string(y2) + " outside [0,k)");
    q[y] += t.lambda;
    q[y2] += 1.0 - t.lambda;
}

struct ClampedLog {
    double value;
    bool active;  // false when the clamp bound was hit; the derivative is then zero
};

inline ClampedLog clamp_log(double log_p, double eps) {
    const double lo = std::log(eps), hi = std::log1p(-eps);
    if (log_p < lo) return {lo, false};
    if (log_p > hi) return {hi, false};
    return {log_p, true};
}

}  // namespace detail

/// Per-row binary loss -t log σ(z) - (1-t) log σ(-z) and its derivative in z.
struct ScalarLoss {
    double value;
    double dz;
};

inline ScalarLoss binary_soft_loss(double z, double t, double eps) {
    const auto lp = detail::clamp_log(log_sigmoid(z), eps);
    const auto ln = detail::clamp_log(log_sigmoid(-z), eps);
    ScalarLoss out;
    out.value = -(t * lp.value + (1.0 - t) * ln.value);
    out.dz = 0.0;
    if (lp.active) out.dz -= t * sigmoid(-z);
    if (ln.active) out.dz += (1.0 - t) * sigmoid(z);
    return out;
}

struct LossGrad {
    double loss = 0.0;
    Matrix grad;  // same shape as the logits
};

/// Mean loss over the batch and its gradient with respect to the logits. A single logit column
/// selects the binary form (labels in {-1,+1}); k columns select softmax cross-entropy over k classes.
inline LossGrad batch_loss_grad(const Matrix& logits, const Targets& targets, const LossSpec& spec) {
    spec.validate();
    const auto n = static_cast<std::size_t>(logits.rows());
    if (targets.size() != n) throw ConfigError("batch_loss_grad: target count does not match logits");
    if (targets.mixed() && targets.secondary.size() != n) throw ConfigError("batch_loss_grad: partner label count mismatch");
    if (targets.mixed() && spec.kind != LossSpec::Kind::mixup)
        throw ConfigError("batch_loss_grad: mixed targets require a Mixup loss");
    if (!all_finite(logits)) throw NumericError("batch_loss_grad: non-finite logits");
    require(n >= 1, "batch_loss_grad: empty batch");
    LossGrad out;
    out.grad.resize(logits.rows(), logits.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    if (logits.cols() == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            const int y = targets.primary[i];
            if (y != -1 && y != 1) throw ModeError("binary loss expects labels in {-1,+1}");
            const double t = detail::binary_soft_target(targets, i, spec);
            const auto l = binary_soft_loss(logits(i, 0), t, spec.clamp_eps);
            total += l.value;
            out.grad(i, 0) = l.dz * inv_n;
        }
    } else {
        const int k = static_cast<int>(logits.cols());
        std::vector<double> q(static_cast<std::size_t>(k)), logp(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < n; ++i) {
            detail::multiclass_soft_target(targets, i, spec, k, q.data());
            const auto row = logits.row(static_cast<Eigen::Index>(i));
            const double mx = row.maxCoeff();
            const double lse = mx + std::log((row.array() - mx).exp().sum());
            double active_mass = 0.0;
            double value = 0.0;
            for (int c = 0; c < k; ++c) {
                logp[c] = row(c) - lse;
                const auto cl = detail::clamp_log(logp[c], spec.clamp_eps);
                value -= q[c] * cl.value;
                if (cl.active) {
                    active_mass += q[c];
                } else {
                    q[c] = 0.0;  // clamped terms contribute no gradient
                }
            }
            total += value;
            for (int c = 0; c < k; ++c)
                out.grad(static_cast<Eigen::Index>(i), c) = (active_mass * std::exp(logp[c]) - q[c]) * inv_n;
        }
    }
    out.loss = total * inv_n;
    if (!std::isfinite(out.loss)) throw NumericError("batch_loss_grad: non-finite loss");
    return out;
}

/// Loss value, gradient and Gauss-Newton Hessian of a binary linear objective in w.
struct Objective {
    double value = 0.0;
    Vector grad;
    Matrix hessian;
};

/// Exact expectation over pi (and over pi x pi x lambda-grid for Mixup), plus beta/2 ||w||^2.
inline Objective population_objective(const Vector& w, const FiniteDistribution& pi, const LossSpec& spec,
                                      const LambdaGrid* grid, bool with_hessian) {
    spec.validate();
    if (!pi.binary()) throw ModeError("population_loss: distribution must be binary with labels in {-1,+1}");
    require(static_cast<std::size_t>(w.size()) == pi.d(), "population_loss: weight dimension mismatch");
    const auto d = static_cast<Eigen::Index>(pi.d());
    Objective out;
    out.grad = Vector::Zero(d);
    if (with_hessian) out.hessian = Matrix::Zero(d, d);
    const Vector z = pi.points * w;
    auto accumulate = [&](double weight, double zval, double t, const auto& v) {
        const auto l = binary_soft_loss(zval, t, spec.clamp_eps);
        out.value += weight * l.value;
        out.grad.noalias() += (weight * l.dz) * v.transpose();
        if (with_hessian) {
            const double s = sigmoid(zval);
            out.hessian.noalias() += (weight * s * (1.0 - s)) * (v.transpose() * v);
        }
    };
    if (spec.kind != LossSpec::Kind::mixup) {
        Targets t = Targets::of(pi.labels);
        for (std::size_t j = 0; j < pi.m(); ++j)
            accumulate(pi.probs[j], z(static_cast<Eigen::Index>(j)), detail::binary_soft_target(t, j, spec),
                       pi.points.row(static_cast<Eigen::Index>(j)));
    } else {
        if (grid == nullptr) throw ConfigError("population_loss: Mixup requires a lambda grid");
        grid->validate();
        Eigen::RowVectorXd zv(d);
        for (std::size_t j = 0; j < pi.m(); ++j) {
            for (std::size_t l = 0; l < pi.m(); ++l) {
                const double pair = pi.probs[j] * pi.probs[l];
                if (pair == 0.0) continue;
                const double t1 = pi.labels[j] > 0 ? 1.0 : 0.0;
                const double t2 = pi.labels[l] > 0 ? 1.0 : 0.0;
                for (std::size_t g = 0; g < grid->points.size(); ++g) {
                    const double lam = grid->points[g];
                    const double weight = pair * grid->weights[g];
                    if (weight == 0.0) continue;
                    zv = lam * pi.points.row(static_cast<Eigen::Index>(j)) +
                         (1.0 - lam) * pi.points.row(static_cast<Eigen::Index>(l));
                    accumulate(weight, zv.dot(w), lam * t1 + (1.0 - lam) * t2, zv);
                }
            }
        }
    }
    if (spec.l2_beta > 0.0) {
        out.value += 0.5 * spec.l2_beta * w.squaredNorm();
        out.grad += spec.l2_beta * w;
        if (with_hessian) out.hessian.diagonal().array() += spec.l2_beta;
    }
    return out;
}

inline double population_loss(const Vector& w, const FiniteDistribution& pi, const LossSpec& spec,
                              const LambdaGrid* grid = nullptr) {
    return population_objective(w, pi, spec, grid, false).value;
}

inline double entropy(const double* q, int k) {
    double h = 0.0;
    for (int c = 0; c < k; ++c) h -= xlogx(q[c]);
    return h;
}

/// Minimum label-smoothed cross-entropy when every support point carries one label:
/// the entropy of the smoothed target.
inline double opt_ls_value(const FiniteDistribution& pi, double alpha, int k) {
    require(alpha >= 0.0 && alpha <= 1.0, "opt_ls_value: alpha must lie in [0,1]");
    require(k >= 2, "opt_ls_value: k must be at least 2");
    for (std::size_t a = 0; a < pi.m(); ++a)
        for (std::size_t b = a + 1; b < pi.m(); ++b)
            if (pi.labels[a] != pi.labels[b] &&
                pi.points.row(static_cast<Eigen::Index>(a)) == pi.points.row(static_cast<Eigen::Index>(b)))
                throw ConfigError("opt_ls_value: support point carries conflicting labels; use opt_mixup_value-style "
                                  "grouping instead");
    const double top = 1.0 - alpha + alpha / k;
    const double rest = alpha / k;
    return -(xlogx(top) + (k - 1) * xlogx(rest));
}

namespace detail {

/// Disjoint-set forest for grouping coincident points.
struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace detail

/// All mixed points of pi x pi x grid with their masses and soft targets.
struct MixedSupport {
    Matrix points;
    std::vector<double> mass;
    Matrix targets;  // rows on the k-simplex
    std::vector<int> label1, label2;  // class indices
    std::vector<std::size_t> grid_index;
};

inline MixedSupport enumerate_mixed_support(const FiniteDistribution& pi, const LambdaGrid& grid) {
    pi.validate();
    grid.validate();
    const std::size_t total = pi.m() * pi.m() * grid.points.size();
    MixedSupport s;
    s.points.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(pi.d()));
    s.targets = Matrix::Zero(static_cast<Eigen::Index>(total), pi.k);
    std::size_t r = 0;
    for (std::size_t j = 0; j < pi.m(); ++j) {
        for (std::size_t l = 0; l < pi.m(); ++l) {
            for (std::size_t g = 0; g < grid.points.size(); ++g, ++r) {
                const double lam = grid.points[g];
                const auto ri = static_cast<Eigen::Index>(r);
                s.points.row(ri) = lam * pi.points.row(static_cast<Eigen::Index>(j)) +
                                   (1.0 - lam) * pi.points.row(static_cast<Eigen::Index>(l));
                s.mass.push_back(pi.probs[j] * pi.probs[l] * grid.weights[g]);
                const int c1 = pi.class_index(j), c2 = pi.class_index(l);
                s.targets(ri, c1) += lam;
                s.targets(ri, c2) += 1.0 - lam;
                s.label1.push_back(c1);
                s.label2.push_back(c2);
                s.grid_index.push_back(g);
            }
        }
    }
    return s;
}

/// Groups rows whose coordinates agree within `tol` (transitively). Returns a group id per row.
inline std::vector<std::size_t> group_coincident(const Matrix& pts, double tol = 1e-12) {
    const auto n = static_cast<std::size_t>(pts.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pts(static_cast<Eigen::Index>(a), 0) < pts(static_cast<Eigen::Index>(b), 0);
    });
    detail::UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = static_cast<Eigen::Index>(order[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto b = static_cast<Eigen::Index>(order[j]);
            if (pts(b, 0) - pts(a, 0) > tol) break;
            if ((pts.row(a) - pts.row(b)).cwiseAbs().maxCoeff() <= tol) uf.unite(order[i], order[j]);
        }
    }
    std::vector<std::size_t> id(n);
    for (std::size_t i = 0; i < n; ++i) id[i] = uf.find(i);
    return id;
}

/// Brute-force minimum of the Mixup loss over all predictors: at every distinct mixed point the
/// best prediction is the mass-weighted average target, whose loss is that average's entropy.
inline double opt_mixup_value(const FiniteDistribution& pi, const LambdaGrid& grid) {
    const auto s = enumerate_mixed_support(pi, grid);
    const auto groups = group_coincident(s.points);
    std::vector<std::size_t> uniq(groups);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(uniq.size()), pi.k);
    std::vector<double> mass(uniq.size(), 0.0);
    for (std::size_t r = 0; r < groups.size(); ++r) {
        const auto g = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), groups[r]) - uniq.begin());
        mass[g] += s.mass[r];
        acc.row(static_cast<Eigen::Index>(g)) += s.mass[r] * s.targets.row(static_cast<Eigen::Index>(r));
    }
    double value = 0.0;
    std::vector<double> q(static_cast<std::size_t>(pi.k));
    for (std::size_t g = 0; g < uniq.size(); ++g) {
        if (mass[g] <= 0.0) continue;
        for (int c = 0; c < pi.k; ++c) q[c] = acc(static_cast<Eigen::Index>(g), c) / mass[g];
        value += mass[g] * entropy(q.data(), pi.k);
    }
    return value;
}

/// Minimum when every (y1, y2, lambda) slice is optimized separately: sum of mass times the entropy
/// of each slice's own target. Never exceeds opt_mixup_value; equal when no two slices share a point
/// with different targets.
inline double opt_mixup_conditional_value(const FiniteDistribution& pi, const LambdaGrid& grid) {
    const auto s = enumerate_mixed_support(pi, grid);
    double value = 0.0;
    std::vector<double> q(static_cast<std::size_t>(pi.k));
    for (std::size_t r = 0; r < s.mass.size(); ++r) {
        for (int c = 0; c < pi.k; ++c) q[c] = s.targets(static_cast<Eigen::Index>(r), c);
        value += s.mass[r] * entropy(q.data(), pi.k);
    }
    return value;
}

}  // namespace lsmix
