#pragma once

#include "lsmix/core.hpp"
#include "lsmix/datagen.hpp"
#include "lsmix/diagnostics.hpp"
#include "lsmix/losses.hpp"
#include "lsmix/models.hpp"

#include <deque>
#include <type_traits>

namespace lsmix {

struct OptimizerConfig {
    enum class Kind { adamw, sgd };

    Kind kind = Kind::adamw;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// AdamW: decoupled shrinkage param *= (1 - lr*wd). SGD: coupled, added to the gradient.
    double weight_decay = 0.0;

    void validate() const {
        require(lr > 0.0 && std::isfinite(lr), "learning rate must be positive");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0,1)");
        require(eps > 0.0, "Adam eps must be positive");
        require(weight_decay >= 0.0, "weight decay must be non-negative");
    }
};

struct AdamState {
    Vector m;
    Vector v;
    long long t = 0;
};

inline void adamw_step(Vector& params, const Vector& grad, AdamState& st, const OptimizerConfig& cfg) {
    if (grad.size() != params.size()) throw ConfigError("adamw_step: gradient size mismatch");
    if (!grad.allFinite()) throw NumericError("adamw_step: non-finite gradient");
    if (st.m.size() == 0) {
        st.m = Vector::Zero(params.size());
        st.v = Vector::Zero(params.size());
    }
    if (cfg.weight_decay != 0.0) params *= 1.0 - cfg.lr * cfg.weight_decay;
    ++st.t;
    st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
    st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    params.array() -= cfg.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + cfg.eps);
}

inline void sgd_step(Vector& params, const Vector& grad, const OptimizerConfig& cfg) {
    if (grad.size() != params.size()) throw ConfigError("sgd_step: gradient size mismatch");
    if (!grad.allFinite()) throw NumericError("sgd_step: non-finite gradient");
    params -= cfg.lr * (grad + cfg.weight_decay * params);
}

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 500;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    /// Diagnostics on the test set every this many epochs (and at epochs 0 and last); 0 disables.
    std::size_t diagnostics_every = 0;

    void validate() const {
        require(batch_size >= 1, "batch size must be positive");
        optimizer.validate();
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_error = 0.0;
};

struct DiagnosticSample {
    std::size_t epoch = 0;
    /// Hidden-layer activations (MLP only).
    double activation_variance = std::numeric_limits<double>::quiet_NaN();
    double output_variance = std::numeric_limits<double>::quiet_NaN();
    double target_output_variance = std::numeric_limits<double>::quiet_NaN();
    /// Linear binary models only.
    double norm_L = std::numeric_limits<double>::quiet_NaN();
    double norm_H = std::numeric_limits<double>::quiet_NaN();
    double ratio_first = std::numeric_limits<double>::quiet_NaN();
};

/// Epoch 0 holds the metrics of the initial model.
struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::vector<DiagnosticSample> samples;

    double final_test_error() const { return epochs.empty() ? std::numeric_limits<double>::quiet_NaN() : epochs.back().test_error; }
    double final_train_loss() const { return epochs.empty() ? std::numeric_limits<double>::quiet_NaN() : epochs.back().train_loss; }
};

namespace detail {

/// Copies rows idx[begin..end) into `out`. Buffers are reused across batches: fresh large
/// allocations cost more in page faults than the matrix products themselves.
inline void gather_rows_into(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                             Matrix& out) {
    out.resize(static_cast<Eigen::Index>(end - begin), x.cols());
    for (std::size_t r = begin; r < end; ++r) out.row(static_cast<Eigen::Index>(r - begin)) = x.row(static_cast<Eigen::Index>(idx[r]));
}

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    Matrix out;
    gather_rows_into(x, idx, begin, end, out);
    return out;
}

/// out.row(r) = lambda * x.row(r) + (1 - lambda) * x.row(pair[r]); same result as mix_pairs.
inline void mix_rows_into(const Matrix& x, const std::vector<std::size_t>& pair, double lambda, Matrix& out) {
    out.resize(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        out.row(r) = lambda * x.row(r) + (1.0 - lambda) * x.row(static_cast<Eigen::Index>(pair[static_cast<std::size_t>(r)]));
}

template <class Model>
void check_model_data(const Model& model, const Dataset& ds, const char* what) {
    ds.validate();
    if (ds.d() != model.input_dim())
        throw ConfigError(std::string(what) + ": data has " + std::to_string(ds.d()) + " features, model expects " +
                          std::to_string(model.input_dim()));
    if (model.outputs() == 1 && !ds.binary()) throw ModeError(std::string(what) + ": binary model needs labels in {-1,+1}");
    if (model.outputs() > 1 && ds.binary()) throw ModeError(std::string(what) + ": multiclass model needs labels in [0,k)");
    if (model.outputs() > 1 && ds.k > model.classes())
        throw ConfigError(std::string(what) + ": data has more classes than the model outputs");
}

template <class Model>
DiagnosticSample sample_diagnostics(const Model& model, const Dataset& train, const Dataset& test, std::size_t epoch) {
    DiagnosticSample s;
    s.epoch = epoch;
    const auto pass = model.forward(test.features);
    const Matrix probs = predict_proba(model, pass.logits);
    try {
        const auto rep = output_variance_report(probs, test.labels);
        s.output_variance = rep.per_class_total_variance;
        s.target_output_variance = rep.target_output_variance;
        if (pass.hidden.size() > 0)
            s.activation_variance = per_class_total_variance(pass.hidden, test.labels, model.classes()).per_class_total_variance;
    } catch (const ConfigError&) {
        // A class absent from the test set leaves the variance metrics undefined (NaN).
    }
    if constexpr (std::is_same_v<Model, LinearBinaryModel>) {
        const auto split = weight_norm_split(model.weights(), train.low_var_dims);
        s.norm_L = split.norm_L;
        s.norm_H = split.norm_H;
        s.ratio_first = split.ratio_first;
    }
    return s;
}

}  // namespace detail

/// Mini-batch training. Batches come from a seeded shuffle each epoch; Mixup draws one lambda and
/// one pairing permutation per batch. The model is updated in place.
template <class Model>
TrainReport fit(Model& model, const Dataset& train, const Dataset& test, const LossSpec& spec, const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    detail::check_model_data(model, train, "fit (train)");
    detail::check_model_data(model, test, "fit (test)");
    Rng shuffle_rng = make_rng({cfg.seed, 0x5f17ULL});
    Rng mix_rng = make_rng({cfg.seed, 0x313ULL});
    AdamState adam;
    TrainReport rep;
    const std::size_t n = train.n();
    const bool sampling = cfg.diagnostics_every > 0;

    auto full_loss = [&]() {
        return batch_loss_grad(model.forward(train.features).logits, Targets::of(train.labels), spec).loss;
    };
    auto test_error = [&]() { return classification_error(model.forward(test.features).logits, test.labels); };

    rep.epochs.push_back({0, full_loss(), test_error()});
    if (sampling) rep.samples.push_back(detail::sample_diagnostics(model, train, test, 0));

    // Full batches and the short tail batch get separate buffers so neither is reallocated.
    Matrix xb_full, xb_tail, mixed_full, mixed_tail;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = random_permutation(n, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const bool full = end - start == cfg.batch_size;
            Matrix& xb = full ? xb_full : xb_tail;
            detail::gather_rows_into(train.features, order, start, end, xb);
            Targets tb;
            tb.primary.reserve(end - start);
            for (std::size_t r = start; r < end; ++r) tb.primary.push_back(train.labels[order[r]]);
            const Matrix* input = &xb;
            if (spec.kind == LossSpec::Kind::mixup) {
                const auto pair = random_permutation(end - start, mix_rng);
                const double lam = sample_lambda(spec.mixing, mix_rng);
                tb.secondary.resize(pair.size());
                for (std::size_t r = 0; r < pair.size(); ++r) tb.secondary[r] = tb.primary[pair[r]];
                tb.lambda = lam;
                Matrix& mixed = full ? mixed_full : mixed_tail;
                detail::mix_rows_into(xb, pair, lam, mixed);
                input = &mixed;
            }
            const Matrix& xin = *input;
            const auto pass = model.forward(xin);
            LossGrad lg;
            try {
                lg = batch_loss_grad(pass.logits, tb, spec);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            Vector grad = model.backward(xin, pass, lg.grad);
            if (spec.l2_beta > 0.0) grad += spec.l2_beta * model.params;
            if (!grad.allFinite()) throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
            if (cfg.optimizer.kind == OptimizerConfig::Kind::adamw) {
                adamw_step(model.params, grad, adam, cfg.optimizer);
            } else {
                sgd_step(model.params, grad, cfg.optimizer);
            }
            loss_sum += lg.loss * static_cast<double>(end - start);
        }
        if (!model.params.allFinite()) throw NumericError("parameters became non-finite at epoch " + std::to_string(epoch));
        rep.epochs.push_back({epoch, loss_sum / static_cast<double>(n), test_error()});
        if (sampling && (epoch % cfg.diagnostics_every == 0 || epoch == cfg.epochs))
            rep.samples.push_back(detail::sample_diagnostics(model, train, test, epoch));
    }
    return rep;
}

// Deterministic full-batch minimization of the population loss plus beta/2 ||w||^2.

struct GdConfig {
    enum class Method { gradient, newton };

    Method method = Method::newton;
    std::size_t max_steps = 1000000;
    double lr = 0.1;
    double tol = 1e-8;
    const LambdaGrid* grid = nullptr;
};

struct GdResult {
    Vector w;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::size_t steps = 0;
    bool converged = false;
};

/// Gradient descent (fixed step) or damped Newton with Armijo backtracking. Stops when the gradient
/// norm reaches `tol`; the caller decides what a non-converged result means.
inline GdResult gd_full_batch_l2(const Vector& w0, const FiniteDistribution& pi, const LossSpec& spec, const GdConfig& cfg) {
    spec.validate();
    require(cfg.lr > 0.0, "gd: learning rate must be positive");
    if (!pi.binary()) throw ModeError("gd_full_batch_l2 requires binary data");
    GdResult res;
    res.w = w0;
    std::deque<double> trace;
    auto diverged = [&](double loss, std::size_t step) {
        std::string t;
        for (double v : trace) t += " " + fmt17(v);
        throw NumericError("gd diverged at step " + std::to_string(step) + " (loss " + fmt17(loss) + "); recent losses:" + t);
    };
    const bool newton = cfg.method == GdConfig::Method::newton;
    auto obj = population_objective(res.w, pi, spec, cfg.grid, newton);
    for (res.steps = 0; res.steps < cfg.max_steps; ++res.steps) {
        res.loss = obj.value;
        res.grad_norm = obj.grad.norm();
        if (!std::isfinite(res.loss) || res.loss > 1e12) diverged(res.loss, res.steps);
        trace.push_back(res.loss);
        if (trace.size() > 8) trace.pop_front();
        if (res.grad_norm <= cfg.tol) {
            res.converged = true;
            return res;
        }
        if (!newton) {
            res.w -= cfg.lr * obj.grad;
            obj = population_objective(res.w, pi, spec, cfg.grid, false);
            continue;
        }
        Matrix h = obj.hessian;
        h.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
        Vector dir = h.ldlt().solve(obj.grad);
        if (!dir.allFinite() || dir.dot(obj.grad) <= 0.0) dir = obj.grad;
        double t = 1.0;
        const double slope = dir.dot(obj.grad);
        bool moved = false;
        for (int halvings = 0; halvings < 80; ++halvings, t *= 0.5) {
            const Vector cand = res.w - t * dir;
            auto next = population_objective(cand, pi, spec, cfg.grid, true);
            if (std::isfinite(next.value) && next.value <= obj.value - 1e-4 * t * slope) {
                res.w = cand;
                obj = std::move(next);
                moved = true;
                break;
            }
        }
        if (!moved) {
            // Rounding floor: no representable decrease along the Newton direction.
            res.loss = obj.value;
            res.grad_norm = obj.grad.norm();
            return res;
        }
    }
    res.loss = obj.value;
    res.grad_norm = obj.grad.norm();
    res.converged = res.grad_norm <= cfg.tol;
    return res;
}

inline GdResult gd_full_batch_l2(const Dataset& ds, const LossSpec& spec, const GdConfig& cfg) {
    return gd_full_batch_l2(Vector::Zero(static_cast<Eigen::Index>(ds.d())), FiniteDistribution::empirical(ds), spec, cfg);
}

// Hard-margin max-margin direction through the origin.

struct MaxMarginResult {
    Vector w;
    double min_margin = 0.0;
    double kkt_residual = 0.0;
    std::vector<std::size_t> active;
    std::size_t iterations = 0;
};

namespace detail {

/// Minimizer of ||sum mu_i p_i|| over the affine hull of the rows in `s` (sum mu = 1).
inline Vector affine_min_norm(const Matrix& p, const std::vector<std::size_t>& s) {
    const auto k = static_cast<Eigen::Index>(s.size());
    Matrix a = Matrix::Zero(k + 1, k + 1);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j)
            a(i, j) = p.row(static_cast<Eigen::Index>(s[i])).dot(p.row(static_cast<Eigen::Index>(s[j])));
        a(i, k) = 1.0;
        a(k, i) = 1.0;
    }
    Vector rhs = Vector::Zero(k + 1);
    rhs(k) = 1.0;
    return a.completeOrthogonalDecomposition().solve(rhs).head(k);
}

}  // namespace detail

/// Wolfe's min-norm-point algorithm on conv{y_i x_i}; w* = u / ||u||^2 for the min-norm point u.
/// The result is rescaled so the smallest margin is exactly 1 and then audited: all margins >= 1 - tol
/// and w in the span of the active rows (residual <= 1e-6 ||w||).
inline MaxMarginResult max_margin_solve(const Dataset& ds, double tol = 1e-6) {
    ds.validate();
    if (!ds.binary()) throw ModeError("max_margin_solve requires binary labels in {-1,+1}");
    Matrix p = ds.features;
    for (std::size_t i = 0; i < ds.n(); ++i) p.row(static_cast<Eigen::Index>(i)) *= ds.labels[i];
    const Vector norms2 = p.rowwise().squaredNorm();
    const double scale = norms2.maxCoeff();
    if (scale == 0.0) throw NumericError("max_margin_solve: all points are zero; not separable");

    Eigen::Index j0;
    norms2.minCoeff(&j0);
    std::vector<std::size_t> s{static_cast<std::size_t>(j0)};
    std::vector<double> lam{1.0};
    Eigen::RowVectorXd x = p.row(j0);
    MaxMarginResult res;
    const double eps_major = 1e-13 * scale;
    for (res.iterations = 0; res.iterations < 100000; ++res.iterations) {
        const Vector dots = p * x.transpose();
        Eigen::Index j;
        dots.minCoeff(&j);
        const double xx = x.squaredNorm();
        if (xx - dots(j) <= eps_major) break;
        if (std::find(s.begin(), s.end(), static_cast<std::size_t>(j)) != s.end()) break;
        s.push_back(static_cast<std::size_t>(j));
        lam.push_back(0.0);
        while (true) {
            const Vector mu = detail::affine_min_norm(p, s);
            if ((mu.array() > 1e-15).all()) {
                for (std::size_t i = 0; i < s.size(); ++i) lam[i] = mu(static_cast<Eigen::Index>(i));
                break;
            }
            double theta = 1.0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double m = mu(static_cast<Eigen::Index>(i));
                if (m <= 1e-15 && lam[i] - m > 0.0) theta = std::min(theta, lam[i] / (lam[i] - m));
            }
            for (std::size_t i = 0; i < s.size(); ++i) lam[i] = theta * mu(static_cast<Eigen::Index>(i)) + (1.0 - theta) * lam[i];
            std::size_t drop = 0;
            for (std::size_t i = 1; i < s.size(); ++i)
                if (lam[i] < lam[drop]) drop = i;
            std::vector<std::size_t> s2;
            std::vector<double> l2;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (i == drop || lam[i] <= 1e-15) continue;
                s2.push_back(s[i]);
                l2.push_back(lam[i]);
            }
            s = std::move(s2);
            lam = std::move(l2);
            const double total = std::accumulate(lam.begin(), lam.end(), 0.0);
            for (auto& v : lam) v /= total;
        }
        x.setZero();
        for (std::size_t i = 0; i < s.size(); ++i) x += lam[i] * p.row(static_cast<Eigen::Index>(s[i]));
    }
    const double xx = x.squaredNorm();
    if (xx <= 1e-14 * scale)
        throw NumericError("max_margin_solve: data is not linearly separable through the origin (the origin lies in "
                           "the convex hull of y_i x_i, so some margin is <= 0 for every w)");
    res.w = x.transpose() / xx;
    const Vector margins = p * res.w;
    res.min_margin = margins.minCoeff();
    if (res.min_margin <= 0.0) throw NumericError("max_margin_solve: data is not linearly separable through the origin");
    res.w /= res.min_margin;
    const Vector final_margins = p * res.w;
    res.min_margin = final_margins.minCoeff();
    if (res.min_margin < 1.0 - tol) throw NumericError("max_margin_solve: margin constraint violated after polishing");
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (final_margins(static_cast<Eigen::Index>(i)) <= 1.0 + 1e-6) res.active.push_back(i);
    Matrix a(static_cast<Eigen::Index>(res.active.size()), p.cols());
    for (std::size_t i = 0; i < res.active.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = p.row(static_cast<Eigen::Index>(res.active[i]));
    const Vector coef = a.transpose().completeOrthogonalDecomposition().solve(res.w);
    res.kkt_residual = (a.transpose() * coef - res.w).norm();
    if (res.kkt_residual > 1e-6 * res.w.norm())
        throw NumericError("max_margin_solve: KKT audit failed (w not in the span of active constraints, residual " +
                           fmt17(res.kkt_residual) + ")");
    return res;
}

}  // namespace lsmix
