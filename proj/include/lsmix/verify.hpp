#pragma once

#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "lsmix/datagen.hpp"
#include "lsmix/diagnostics.hpp"
#include "lsmix/losses.hpp"
#include "lsmix/train.hpp"

namespace lsmix {

// Property suites behind `lsmix verify`. Every suite is deterministic in its seed and only
// writes below `out_dir` (the parser suite needs scratch files; the rest write nothing).

struct SuiteResult {
    std::string name;
    std::size_t checks = 0;
    std::size_t passed = 0;
    /// First few failure descriptions, enough to debug without flooding the terminal.
    std::vector<std::string> failures;
    /// Largest observed error of the suite's main quantity (meaning depends on the suite).
    double worst = 0.0;
    /// One-line summary of the observed margins.
    std::string note;

    bool ok() const { return checks > 0 && passed == checks; }
    void record(bool pass, const std::string& what) {
        ++checks;
        if (pass) {
            ++passed;
        } else if (failures.size() < 8) {
            failures.push_back(what);
        }
    }
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    std::string out_dir = "verify_out";
};

namespace detail {

inline std::vector<int> random_labels(std::size_t n, int k, Rng& rng) {
    std::vector<int> y(n);
    for (auto& v : y)
        v = k == 1 ? (uniform01(rng) < 0.5 ? -1 : 1) : static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(k)));
    return y;
}

inline Matrix random_block(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -scale, scale);
    return m;
}

/// Worst relative error between the analytic logit gradient and central differences.
inline double gradient_error(const Matrix& logits, const Targets& t, const LossSpec& spec) {
    const auto lg = batch_loss_grad(logits, t, spec);
    const double h = 1e-5;
    // Entries whose derivative is tiny are judged against this floor instead of themselves.
    const double floor = 1e-3 / static_cast<double>(logits.rows());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            Matrix up = logits, dn = logits;
            up(i, c) += h;
            dn(i, c) -= h;
            const double num = (batch_loss_grad(up, t, spec).loss - batch_loss_grad(dn, t, spec).loss) / (2 * h);
            const double ana = lg.grad(i, c);
            worst = std::max(worst, std::abs(num - ana) / std::max(floor, std::max(std::abs(num), std::abs(ana))));
        }
    return worst;
}

inline FiniteDistribution random_pi(std::size_t m, std::size_t d, int k, Rng& rng) {
    FiniteDistribution pi;
    pi.k = k;
    pi.points = random_block(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d), rng, 2.0);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        // Cycle the labels so every class is present.
        const int c = static_cast<int>(j % static_cast<std::size_t>(k));
        pi.labels.push_back(k == 2 ? (c == 1 ? 1 : -1) : c);
        pi.probs.push_back(0.2 + uniform01(rng));
        total += pi.probs.back();
    }
    for (auto& p : pi.probs) p /= total;
    pi.probs[0] += 1.0 - std::accumulate(pi.probs.begin(), pi.probs.end(), 0.0);
    return pi;
}

inline Matrix softmax_rows(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        p.row(i) = (z.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

/// At every query point, the target of the nearest enumerated mixed point: a minimizer of each slice.
inline BatchPredictor slice_optimal(const FiniteDistribution& pi, const LambdaGrid& grid) {
    const auto s = enumerate_mixed_support(pi, grid);
    return [s](const Matrix& x) {
        Matrix out(x.rows(), s.targets.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Eigen::Index best = 0;
            (s.points.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
            out.row(i) = s.targets.row(best);
        }
        return out;
    };
}

}  // namespace detail

/// Analytic loss gradients against central differences for CE, LS and Mixup, binary and 10-class.
inline SuiteResult verify_gradients(const VerifyOptions& opt, std::size_t instances = 100) {
    SuiteResult r;
    r.name = "gradients";
    Rng rng = make_rng({opt.seed, 0x9ad});
    struct Case {
        LossSpec spec;
        double lambda;
    };
    const std::vector<Case> cases = {{LossSpec::ce(), 1.0},
                                     {LossSpec::label_smoothing(0.1), 1.0},
                                     {LossSpec::label_smoothing(0.5), 1.0},
                                     {LossSpec::mixup(MixingDistribution::beta(1, 1)), 0.25},
                                     {LossSpec::mixup(MixingDistribution::beta(1, 1)), 0.5}};
    for (std::size_t rep = 0; rep < instances; ++rep)
        for (const auto& c : cases)
            for (int k : {1, 10}) {
                const Eigen::Index n = 4;
                const Matrix logits = detail::random_block(n, k, rng, 4.0);
                Targets t = Targets::of(detail::random_labels(static_cast<std::size_t>(n), k, rng));
                if (c.spec.kind == LossSpec::Kind::mixup) {
                    t.secondary = detail::random_labels(static_cast<std::size_t>(n), k, rng);
                    t.lambda = c.lambda;
                }
                const double e = detail::gradient_error(logits, t, c.spec);
                r.worst = std::max(r.worst, e);
                r.record(e <= 1e-6, c.spec.describe() + " k=" + std::to_string(k) + " rel err " + fmt17(e));
            }
    return r;
}

/// LS with alpha = 0 and Mixup with all mass at lambda = 1 reduce to plain cross-entropy.
inline SuiteResult verify_degeneracy(const VerifyOptions& opt, std::size_t instances = 100) {
    SuiteResult r;
    r.name = "degeneracy";
    Rng rng = make_rng({opt.seed, 0xde9});
    const auto ls0 = LossSpec::label_smoothing(0.0);
    const auto mix1 = LossSpec::mixup(MixingDistribution::point_mass(1.0));
    for (std::size_t rep = 0; rep < instances; ++rep)
        for (int k : {1, 10}) {
            const Matrix logits = detail::random_block(32, k, rng, 5.0);
            const auto t = Targets::of(detail::random_labels(32, k, rng));
            const auto ce = batch_loss_grad(logits, t, LossSpec::ce());
            Targets mixed = t;
            mixed.secondary = detail::random_labels(32, k, rng);
            mixed.lambda = 1.0;
            for (const auto& [name, got] : {std::pair{std::string("ls0"), batch_loss_grad(logits, t, ls0)},
                                            std::pair{std::string("mixup@1"), batch_loss_grad(logits, mixed, mix1)}}) {
                const double e = std::max(std::abs(got.loss - ce.loss), (got.grad - ce.grad).cwiseAbs().maxCoeff());
                r.worst = std::max(r.worst, e);
                r.record(e <= 1e-12, name + " k=" + std::to_string(k) + " differs from CE by " + fmt17(e));
            }
            // Population form: the Mixup objective under PointMass(1) equals the CE objective.
            const auto pi = detail::random_pi(6, 3, 2, rng);
            const Vector w = detail::random_block(3, 1, rng, 2.0).col(0);
            const auto grid = make_lambda_grid(mix1.mixing);
            const double e = std::abs(population_loss(w, pi, mix1, &grid) - population_loss(w, pi, LossSpec::ce()));
            r.worst = std::max(r.worst, e);
            r.record(e <= 1e-12, "population mixup@1 differs from CE by " + fmt17(e));
        }
    return r;
}

/// The Jensen gap of phi lies in [gamma1/2, gamma2/2] * Var(X), with equality for a quadratic.
inline SuiteResult verify_jensen_gap(const VerifyOptions& opt, std::size_t instances = 1000) {
    SuiteResult r;
    r.name = "jensen-gap";
    Rng rng = make_rng({opt.seed, 0x1e5});
    for (std::size_t rep = 0; rep < instances; ++rep) {
        ScalarDistribution d;
        const std::size_t m = 1 + uniform_index(rng, 8);
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            d.values.push_back(uniform(rng, -4, 4));
            d.probs.push_back(uniform01(rng) + 1e-3);
            total += d.probs.back();
        }
        for (auto& p : d.probs) p /= total;
        d.probs[0] += 1.0 - std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
        const auto [lo, hi] = std::minmax_element(d.values.begin(), d.values.end());
        ConvexScalar fn;
        std::string what;
        switch (rep % 4) {
            case 0: {
                const double a = uniform(rng, 0.1, 5.0), b = uniform(rng, -2, 2);
                fn = {[a, b](double x) { return a * x * x + b * x; }, [a](double) { return 2 * a; }, 2 * a, 2 * a};
                what = "quadratic";
                break;
            }
            case 1: {
                const double alpha = uniform(rng, 0.0, 1.0);
                fn.phi = [alpha](double z) { return -(1 - alpha / 2) * log_sigmoid(z) - alpha / 2 * log_sigmoid(-z); };
                fn.second = [](double z) { return sigmoid(z) * (1.0 - sigmoid(z)); };
                what = "smoothed logistic";
                break;
            }
            case 2: {
                const double s = uniform(rng, 0.1, 1.0);
                fn.phi = [s](double x) { return std::exp(s * x); };
                fn.second = [s](double x) { return s * s * std::exp(s * x); };
                what = "exponential";
                break;
            }
            default: {
                fn.phi = [](double x) { return std::log(std::cosh(x)); };
                fn.second = [](double x) { return 1.0 / (std::cosh(x) * std::cosh(x)); };
                what = "log cosh";
            }
        }
        if (rep % 4 != 0) {
            // Certified bounds: the extremes of phi'' on the support hull (both ends are monotone or unimodal pieces).
            auto [g1, g2] = scan_extremes(fn.second, *lo, *hi);
            fn.gamma1 = g1;
            fn.gamma2 = g2;
        }
        const auto res = jensen_gap_check(fn, d);
        bool pass = res.pass;
        if (rep % 4 == 0) {
            const double want = 0.5 * fn.gamma1 * d.variance();
            const double e = std::abs(res.gap - want);
            r.worst = std::max(r.worst, e / std::max(1.0, want));
            pass = pass && e <= 1e-10 * std::max(1.0, want);
        }
        r.record(pass, what + ": gap " + fmt17(res.gap) + " outside [" + fmt17(res.lower) + ", " + fmt17(res.upper) + "]");
    }
    return r;
}

/// Low-variance constant dims plus wide high-variance dims: the converged L2 solution and the
/// max-margin solution both keep at least half their squared norm on the high-variance block.
inline SuiteResult verify_norm_localization(const VerifyOptions& opt, std::size_t datasets = 21) {
    SuiteResult r;
    r.name = "norm-localization";
    double smallest = 1.0;
    const std::size_t dims[] = {2, 4, 10};
    for (std::size_t i = 0; i < datasets; ++i) {
        SyntheticConfig sc;
        sc.d = dims[i % 3];
        sc.n = 200;
        sc.gamma = 0.05;
        sc.high_lo = 1.0;
        sc.high_hi = 10.0;
        sc.seed = mix64(opt.seed * 1000 + i);
        const auto ds = sample_lowvar_highvar(sc);
        auto judge = [&](const Vector& w, const std::string& what) {
            const auto split = weight_norm_split(w, ds.low_var_dims);
            const double share = split.norm_H * split.norm_H / w.squaredNorm();
            smallest = std::min(smallest, share);
            r.worst = std::max(r.worst, 0.5 - share);
            r.record(share >= 0.5, what + " d=" + std::to_string(sc.d) + ": high-variance share " + fmt17(share));
        };
        for (double beta : {1e-3, 1e-2, 1e-1}) {
            const auto res = gd_full_batch_l2(ds, LossSpec::ce(beta), {});
            if (!res.converged) {
                r.record(false, "L2 beta=" + fmt17(beta) + " did not converge (grad " + fmt17(res.grad_norm) + ")");
                continue;
            }
            judge(res.w, "L2 beta=" + fmt17(beta));
        }
        judge(max_margin_solve(ds).w, "max-margin");
    }
    r.note = "smallest high-variance share of |w|^2 " + fmt17(smallest);
    return r;
}

/// LS and Mixup lower-bound certificates on random and trained predictors, and zero slack at the optimum.
inline SuiteResult verify_certificates(const VerifyOptions& opt, std::size_t instances = 200) {
    SuiteResult r;
    r.name = "certificates";
    Rng rng = make_rng({opt.seed, 0xce7});
    double smallest = std::numeric_limits<double>::infinity(), at_opt = 0.0;
    auto judge = [&](const Certificate& c, const std::string& what) {
        smallest = std::min(smallest, c.slack);
        r.worst = std::max(r.worst, -c.slack);
        r.record(c.satisfied, what + ": slack " + fmt17(c.slack));
    };
    for (std::size_t rep = 0; rep < instances; ++rep) {
        const bool trained = rep % 2 == 1;
        const std::string how = trained ? "trained" : "random";
        // Label smoothing, binary or multiclass.
        {
            const int k = rep % 3 == 0 ? 2 : 2 + static_cast<int>(uniform_index(rng, 5));
            const std::size_t d = 1 + uniform_index(rng, 4);
            const auto pi = detail::random_pi(static_cast<std::size_t>(2 * k) + uniform_index(rng, 6), d, k, rng);
            const double alpha = uniform(rng, 0.01, 0.99);
            Matrix out;
            if (k == 2 && trained) {
                const auto fit = gd_full_batch_l2(Vector::Zero(static_cast<Eigen::Index>(d)), pi, LossSpec::label_smoothing(alpha), {});
                out = linear_predictor(fit.w)(pi.points);
            } else {
                const Matrix w = detail::random_block(static_cast<Eigen::Index>(d), k, rng, trained ? 0.5 : 3.0);
                out = detail::softmax_rows(pi.points * w);
            }
            judge(ls_lower_bound_certificate(out, pi, alpha, k), "ls " + how + " k=" + std::to_string(k));
        }
        // Mixup, binary.
        {
            const std::size_t d = 1 + uniform_index(rng, 3);
            const auto pi = detail::random_pi(2 + uniform_index(rng, 4), d, 2, rng);
            const double a = uniform(rng, 0.3, 4.0);
            const auto grid = make_lambda_grid(MixingDistribution::beta(a, a), 9);
            Vector w;
            if (trained) {
                GdConfig gc;
                gc.grid = &grid;
                w = gd_full_batch_l2(Vector::Zero(static_cast<Eigen::Index>(d)), pi, LossSpec::mixup(MixingDistribution::beta(a, a)), gc).w;
            } else {
                w = detail::random_block(static_cast<Eigen::Index>(d), 1, rng, 3.0).col(0);
            }
            judge(mixup_lower_bound_certificate(linear_predictor(w), pi, grid), "mixup " + how);
        }
    }
    // The group-optimal predictor closes the bound.
    for (std::size_t rep = 0; rep < 20; ++rep) {
        const int k = 2 + static_cast<int>(rep % 4);
        const auto pi = detail::random_pi(static_cast<std::size_t>(2 * k), 2, k, rng);
        const double alpha = uniform(rng, 0.05, 0.95);
        Matrix out(static_cast<Eigen::Index>(pi.m()), k);
        for (std::size_t j = 0; j < pi.m(); ++j)
            for (int c = 0; c < k; ++c) out(static_cast<Eigen::Index>(j), c) = (c == pi.class_index(j) ? 1.0 - alpha : 0.0) + alpha / k;
        const auto lc = ls_lower_bound_certificate(out, pi, alpha, k);
        at_opt = std::max(at_opt, std::abs(lc.slack));
        r.record(std::abs(lc.slack) <= 1e-6, "ls optimum slack " + fmt17(lc.slack));
        const auto mpi = detail::random_pi(4, 2, 2, rng);
        const auto grid = make_lambda_grid(MixingDistribution::beta(2, 2), 7);
        const auto mc = mixup_lower_bound_certificate(detail::slice_optimal(mpi, grid), mpi, grid);
        at_opt = std::max(at_opt, std::abs(mc.slack));
        r.record(std::abs(mc.slack) <= 1e-6, "mixup optimum slack " + fmt17(mc.slack));
    }
    r.note = "smallest slack " + fmt17(smallest) + ", largest |slack| at the optimum " + fmt17(at_opt);
    return r;
}

/// IDX and CIFAR binaries round-trip and every truncation is rejected; dataset CSV is lossless.
inline SuiteResult verify_parsers(const VerifyOptions& opt) {
    SuiteResult r;
    r.name = "parsers";
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(opt.out_dir) / "parsers";
    fs::create_directories(dir);
    Rng rng = make_rng({opt.seed, 0x9a5});

    auto expect_parse_error = [&](auto&& load, const std::string& what) {
        try {
            load();
            r.record(false, what + " was accepted");
        } catch (const ParseError&) {
            r.record(true, what);
        }
    };
    auto truncations = [&](const std::string& path, std::size_t step, auto&& load) {
        const auto bytes = detail::read_file(path);
        const std::string cut = (dir / "cut.bin").string();
        std::vector<std::size_t> lens;
        for (std::size_t len = 0; len < bytes.size(); len += step) lens.push_back(len);
        lens.push_back(bytes.size() - 1);
        for (auto len : lens) {
            detail::write_file(cut, std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)));
            expect_parse_error([&] { load(cut); }, path + " truncated to " + std::to_string(len));
        }
    };

    ImageDataset mn;
    mn.channels = 1;
    mn.height = 28;
    mn.width = 28;
    for (int i = 0; i < 7; ++i) mn.labels.push_back(static_cast<int>(uniform_index(rng, 10)));
    mn.pixels.resize(mn.labels.size() * 784);
    for (auto& p : mn.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
    const std::string imgs = (dir / "imgs.idx").string(), labs = (dir / "labs.idx").string();
    write_mnist_idx(mn, imgs, labs);
    const auto back = load_mnist_idx(imgs, labs);
    r.record(back.pixels == mn.pixels && back.labels == mn.labels && back.height == 28 && back.width == 28, "idx round trip");
    const auto hdr = parse_idx_header(detail::read_file(imgs), true, imgs);
    r.record(hdr.count == 7 && hdr.rows == 28 && hdr.cols == 28, "idx header fields");
    truncations(imgs, 97, [&](const std::string& p) { load_mnist_idx(p, labs); });
    truncations(labs, 1, [&](const std::string& p) { load_mnist_idx(imgs, p); });

    ImageDataset cf;
    cf.channels = 3;
    cf.height = 32;
    cf.width = 32;
    for (int i = 0; i < 3; ++i) cf.labels.push_back(static_cast<int>(uniform_index(rng, 10)));
    cf.pixels.resize(cf.labels.size() * kCifarRecord - cf.labels.size());
    for (auto& p : cf.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
    const std::string batch = (dir / "batch.bin").string();
    write_cifar10_binary(cf, batch);
    const auto cb = load_cifar10_binary({batch});
    r.record(cb.pixels == cf.pixels && cb.labels == cf.labels && cb.channels == 3, "cifar round trip");
    // CIFAR batches have no header, so a cut on a record boundary is a valid shorter batch; 331 never lands on one.
    truncations(batch, 331, [&](const std::string& p) { load_cifar10_binary({p}); });

    Dataset ds;
    ds.features = detail::random_block(9, 4, rng, 1e3);
    ds.features(0, 0) = 1e-300;
    ds.features(1, 1) = -0.1;
    ds.labels = detail::random_labels(9, 1, rng);
    ds.k = 2;
    const std::string csv = (dir / "ds.csv").string();
    write_dataset_csv(ds, csv);
    const auto dback = read_dataset_csv(csv);
    r.record(dback.labels == ds.labels && dback.features.rows() == 9 && (dback.features.array() == ds.features.array()).all(),
             "dataset csv round trip");
    fs::remove_all(dir);
    return r;
}

inline const std::vector<std::string>& verify_suite_names() {
    static const std::vector<std::string> names = {"gradients", "degeneracy", "jensen-gap", "norm-localization",
                                                   "certificates", "parsers"};
    return names;
}

inline SuiteResult run_verify_suite(const std::string& name, const VerifyOptions& opt) {
    if (name == "gradients") return verify_gradients(opt);
    if (name == "degeneracy") return verify_degeneracy(opt);
    if (name == "jensen-gap") return verify_jensen_gap(opt);
    if (name == "norm-localization") return verify_norm_localization(opt);
    if (name == "certificates") return verify_certificates(opt);
    if (name == "parsers") return verify_parsers(opt);
    throw ConfigError("unknown verify suite '" + name + "'");
}

}  // namespace lsmix
