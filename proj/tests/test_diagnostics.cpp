#include <gtest/gtest.h>

#include "lsmix/diagnostics.hpp"
#include "test_util.hpp"

using namespace lsmix;
using lsmix::testing::random_matrix;

namespace {

FiniteDistribution random_binary_pi(std::size_t m, std::size_t d, Rng& rng) {
    FiniteDistribution pi;
    pi.points = random_matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d), rng, 2.0);
    double total = 0;
    for (std::size_t j = 0; j < m; ++j) {
        pi.labels.push_back(j % 2 ? 1 : -1);
        pi.probs.push_back(0.2 + uniform01(rng));
        total += pi.probs.back();
    }
    for (auto& p : pi.probs) p /= total;
    const double s = std::accumulate(pi.probs.begin(), pi.probs.end(), 0.0);
    pi.probs[0] += 1.0 - s;
    return pi;
}

Matrix random_simplex_rows(Eigen::Index n, Eigen::Index k, Rng& rng) {
    Matrix p(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < k; ++c) p(i, c) = 0.05 + uniform01(rng);
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

/// Predicts, at each query point, the target of the nearest enumerated mixed point.
BatchPredictor slice_optimal_predictor(const FiniteDistribution& pi, const LambdaGrid& grid) {
    const auto s = enumerate_mixed_support(pi, grid);
    return [s](const Matrix& x) {
        Matrix out(x.rows(), 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Eigen::Index best;
            (s.points.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
            out.row(i) = s.targets.row(best);
        }
        return out;
    };
}

}  // namespace

TEST(PerClassTotalVariance, HandValues) {
    Matrix v(4, 2);
    v << 1, 2, 1, 2, 5, 5, 5, 5;
    EXPECT_EQ(per_class_total_variance(v, {0, 0, 1, 1}, 2).per_class_total_variance, 0.0);
    const double a = 1.7;
    Matrix w(2, 3);
    w << -a, 0, 0, a, 0, 0;
    const auto rep = per_class_total_variance(w, {0, 0}, 1);
    EXPECT_NEAR(rep.per_class_total_variance, a * a, 1e-15);
    ASSERT_EQ(rep.per_class.size(), 1u);
    EXPECT_EQ(rep.per_class[0].count, 2u);
    EXPECT_THROW(per_class_total_variance(w, {0, 0}, 2), ConfigError);
}

TEST(PerClassTotalVariance, ScaleAndTranslation) {
    Rng rng = make_rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix v = random_matrix(30, 4, rng, 3.0);
        std::vector<int> y;
        for (int i = 0; i < 30; ++i) y.push_back(i % 3);
        const double base = per_class_total_variance(v, y, 3).per_class_total_variance;
        const double c = uniform(rng, 0.1, 5.0);
        EXPECT_NEAR(per_class_total_variance(c * v, y, 3).per_class_total_variance, c * c * base, 1e-10 * c * c * base);
        Matrix shifted = v;
        for (int i = 0; i < 30; ++i) shifted.row(i) += Eigen::RowVector4d(3, -1, 2, y[static_cast<std::size_t>(i)] * 10.0);
        EXPECT_NEAR(per_class_total_variance(shifted, y, 3).per_class_total_variance, base, 1e-10 * (1 + base));
    }
}

TEST(TargetClassOutputVariance, HandValueAndBound) {
    Matrix p(3, 2);
    p << 0.2, 0.8, 0.0, 1.0, 0.7, 0.3;
    // Class +1 rows carry target-probs {0.8, 1.0}: variance 0.01. Class -1 has one row: 0.
    const double v = target_class_output_variance(p, {1, 1, -1});
    EXPECT_NEAR(v, 0.5 * 0.01, 1e-15);
    Rng rng = make_rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix q = random_simplex_rows(40, 5, rng);
        std::vector<int> y;
        for (int i = 0; i < 40; ++i) y.push_back(i % 5);
        EXPECT_LE(target_class_output_variance(q, y), per_class_total_variance(q, y, 5).per_class_total_variance + 1e-15);
    }
    Matrix bad = p;
    bad(0, 0) = 0.5;
    EXPECT_THROW(target_class_output_variance(bad, {1, 1, -1}), NumericError);
    EXPECT_EQ(target_class_output_variance(Matrix::Constant(4, 2, 0.5), {1, 1, -1, -1}), 0.0);
}

TEST(WeightNormSplit, Examples) {
    const auto e1 = weight_norm_split(Vector::Unit(3, 0), {0});
    EXPECT_EQ(e1.norm_L, 1.0);
    EXPECT_EQ(e1.norm_H, 0.0);
    EXPECT_TRUE(e1.ratio_infinite);
    EXPECT_TRUE(std::isinf(e1.ratio_first));
    Vector w(2);
    w << 1, 0.1;
    const auto s = weight_norm_split(w, {1});
    EXPECT_NEAR(s.norm_L, 0.1, 1e-17);
    EXPECT_EQ(s.norm_H, 1.0);
    EXPECT_NEAR(s.ratio_first, 10.0, 1e-14);
    Rng rng = make_rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const Vector v = random_matrix(7, 1, rng);
        const auto sp = weight_norm_split(v, {0, 3, 5});
        EXPECT_NEAR(sp.norm_L * sp.norm_L + sp.norm_H * sp.norm_H, v.squaredNorm(), 1e-14);
    }
    EXPECT_THROW(weight_norm_split(w, {2}), ConfigError);
}

TEST(JensenGap, QuadraticEqualityAndPointMass) {
    ConvexScalar sq{[](double x) { return x * x; }, [](double) { return 2.0; }, 2.0, 2.0};
    ScalarDistribution d{{-1.0, 0.5, 3.0}, {0.2, 0.5, 0.3}};
    const auto r = jensen_gap_check(sq, d);
    EXPECT_NEAR(r.gap, d.variance(), 1e-14);
    EXPECT_TRUE(r.pass);
    const auto pm = jensen_gap_check(sq, ScalarDistribution{{1.3}, {1.0}});
    EXPECT_EQ(pm.gap, 0.0);
    EXPECT_EQ(pm.lower, 0.0);
    EXPECT_EQ(pm.upper, 0.0);
}

TEST(JensenGap, SmoothedLossOnRandomDistributions) {
    auto phi = [](double z) { return -0.9 * log_sigmoid(z) - 0.1 * log_sigmoid(-z); };
    auto second = [](double z) { return sigmoid(z) * (1.0 - sigmoid(z)); };
    Rng rng = make_rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        ScalarDistribution d;
        const std::size_t m = 2 + uniform_index(rng, 6);
        double total = 0;
        for (std::size_t i = 0; i < m; ++i) {
            d.values.push_back(uniform(rng, -3, 3));
            d.probs.push_back(uniform01(rng) + 1e-3);
            total += d.probs.back();
        }
        for (auto& p : d.probs) p /= total;
        d.probs[0] += 1.0 - std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
        const auto [lo, hi] = std::minmax_element(d.values.begin(), d.values.end());
        const auto [g1, g2] = scan_extremes(second, *lo, *hi);
        const auto r = jensen_gap_check({phi, second, g1, g2}, d);
        EXPECT_TRUE(r.pass) << r.gap << " not in [" << r.lower << ", " << r.upper << "]";
    }
}

TEST(JensenGap, InvalidBoundsRejected) {
    ConvexScalar sq{[](double x) { return x * x; }, [](double) { return 2.0; }, 2.5, 3.0};
    EXPECT_THROW(jensen_gap_check(sq, ScalarDistribution{{0, 1}, {0.5, 0.5}}), ConfigError);
    sq.gamma1 = 3.0;
    sq.gamma2 = 2.0;
    sq.second = nullptr;
    EXPECT_THROW(jensen_gap_check(sq, ScalarDistribution{{0, 1}, {0.5, 0.5}}), ConfigError);
}

TEST(LsCertificate, OptimalPredictorHasZeroSlack) {
    Rng rng = make_rng(5);
    const auto pi = random_binary_pi(5, 2, rng);
    Matrix out(5, 2);
    for (Eigen::Index j = 0; j < 5; ++j) {
        const int y = pi.class_index(static_cast<std::size_t>(j));
        out(j, y) = 1 - 0.3 / 2;
        out(j, 1 - y) = 0.3 / 2;
    }
    const auto c = ls_lower_bound_certificate(out, pi, 0.3, 2);
    EXPECT_NEAR(c.variance_term, 0.0, 1e-15);
    EXPECT_NEAR(c.slack, 0.0, 1e-9);
    EXPECT_TRUE(c.satisfied);
    EXPECT_EQ(c.constant_C, 0.3 / 4);
}

TEST(LsCertificate, ThreePointHandComputation) {
    FiniteDistribution pi;
    pi.points = Matrix(3, 1);
    pi.points << -1, 1, 2;
    pi.labels = {-1, 1, 1};
    pi.probs = {0.5, 0.25, 0.25};
    Matrix g(3, 2);
    g << 0.6, 0.4, 0.3, 0.7, 0.1, 0.9;
    const double alpha = 0.2;
    const auto c = ls_lower_bound_certificate(g, pi, alpha, 2);
    const double loss = 0.5 * -(0.9 * std::log(0.6) + 0.1 * std::log(0.4)) + 0.25 * -(0.1 * std::log(0.3) + 0.9 * std::log(0.7)) +
                        0.25 * -(0.1 * std::log(0.1) + 0.9 * std::log(0.9));
    // Class +1: g_1 in {0.7, 0.9} equally likely, per-coordinate variance 0.01, trace 0.02; class -1 constant.
    const double var = 0.5 * 0.02;
    EXPECT_NEAR(c.loss_value, loss, 1e-14);
    EXPECT_NEAR(c.variance_term, var, 1e-15);
    EXPECT_NEAR(c.opt_value, -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)), 1e-15);
    EXPECT_GT(c.slack, 0.0);
    EXPECT_TRUE(c.satisfied);
    const auto small = ls_lower_bound_certificate(g, pi, 1e-12, 2);
    EXPECT_LT(small.constant_C, 1e-12);
}

TEST(LsCertificate, RandomPredictorsAlwaysSatisfy) {
    Rng rng = make_rng(6);
    for (int rep = 0; rep < 100; ++rep) {
        FiniteDistribution pi;
        const int k = 2 + static_cast<int>(uniform_index(rng, 4));
        pi.k = k;
        pi.points = random_matrix(2 * k, 3, rng);
        for (int j = 0; j < 2 * k; ++j) {
            pi.labels.push_back(j % k);
            pi.probs.push_back(1.0 / (2 * k));
        }
        const double alpha = uniform(rng, 0.01, 0.99);
        const auto c = ls_lower_bound_certificate(random_simplex_rows(2 * k, k, rng), pi, alpha, k);
        EXPECT_TRUE(c.satisfied) << c.slack;
    }
}

TEST(MixupCertificate, SliceOptimalPredictorHasZeroSlack) {
    Rng rng = make_rng(7);
    const auto pi = random_binary_pi(4, 2, rng);
    const auto grid = make_lambda_grid(MixingDistribution::beta(2, 2), 7);
    const auto c = mixup_lower_bound_certificate(slice_optimal_predictor(pi, grid), pi, grid);
    EXPECT_NEAR(c.variance_term, 0.0, 1e-12);
    EXPECT_NEAR(c.slack, 0.0, 1e-9);
    EXPECT_NEAR(c.opt_value, c.grouped_opt_value, 1e-12);
}

TEST(MixupCertificate, HalfGridTwoPointsEnumeration) {
    FiniteDistribution pi;
    pi.points = Matrix(2, 1);
    pi.points << 1, -1;
    pi.labels = {1, -1};
    pi.probs = {0.5, 0.5};
    const auto grid = LambdaGrid::point_mass(0.5);
    for (double w : {-2.0, 0.0, 0.3, 4.0}) {
        const auto c = mixup_lower_bound_certificate(linear_predictor(Vector::Constant(1, w)), pi, grid);
        // Mixed points: z=1 (target +1), z=-1 (target -1), z=0 twice (target 1/2).
        const double loss = 0.25 * std::log1p(std::exp(-w)) * 2 + 0.5 * std::log(2.0);
        EXPECT_NEAR(c.loss_value, loss, 1e-14);
        EXPECT_NEAR(c.opt_value, 0.5 * std::log(2.0), 1e-15);
        EXPECT_EQ(c.variance_term, 0.0);  // every slice holds a single point
        EXPECT_TRUE(c.satisfied);
        EXPECT_EQ(c.constant_C, 0.5 / 4);
    }
}

TEST(MixupCertificate, Errors) {
    Rng rng = make_rng(8);
    const auto pi = random_binary_pi(4, 2, rng);
    LambdaGrid g{{0.0, 0.5}, {0.5, 0.5}};
    EXPECT_THROW(mixup_lower_bound_certificate(linear_predictor(Vector::Zero(2)), pi, g), ConfigError);
    LambdaGrid ok{{0.0, 0.5}, {0.0, 1.0}};
    EXPECT_NO_THROW(mixup_lower_bound_certificate(linear_predictor(Vector::Zero(2)), pi, ok));
    FiniteDistribution multi;
    multi.k = 3;
    multi.points = random_matrix(3, 2, rng);
    multi.labels = {0, 1, 2};
    multi.probs = {0.25, 0.25, 0.5};
    EXPECT_THROW(mixup_lower_bound_certificate(linear_predictor(Vector::Zero(2)), multi, LambdaGrid::point_mass(0.5)), ModeError);
}

TEST(MixupCertificate, SlackShrinksTowardOptimalPredictor) {
    Rng rng = make_rng(9);
    FiniteDistribution pi;
    pi.points = Matrix(2, 2);
    pi.points << 1.0, 0.3, -0.4, -1.2;
    pi.labels = {1, -1};
    pi.probs = {0.5, 0.5};
    const auto grid = make_lambda_grid(MixingDistribution::beta(1, 1), 9);
    const auto opt = slice_optimal_predictor(pi, grid);
    const auto rough = linear_predictor(random_matrix(2, 1, rng, 3.0));
    double prev = std::numeric_limits<double>::infinity();
    for (double t : {0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0}) {
        BatchPredictor mix = [&](const Matrix& x) { return Matrix((1 - t) * rough(x) + t * opt(x)); };
        const auto c = mixup_lower_bound_certificate(mix, pi, grid);
        EXPECT_TRUE(c.satisfied);
        EXPECT_LE(c.slack, prev + 1e-12);
        prev = c.slack;
    }
    EXPECT_LE(std::abs(prev), 1e-9);
}

TEST(BoundaryGrid, AnglesAndShape) {
    Vector w(2);
    w << 0, 1;
    auto g = boundary_grid(LinearBinaryModel::from_weights(w), Region{-1, 1, -1, 1}, 11);
    EXPECT_NEAR(g.angle_deg, 90.0, 1e-12);
    EXPECT_EQ(g.probs.rows(), 11);
    EXPECT_NEAR(g.probs(5, 3), 0.5, 1e-15);  // y = 0 row
    EXPECT_GT(g.probs(10, 0), 0.5);
    w << 1, 1;
    EXPECT_NEAR(boundary_grid(LinearBinaryModel::from_weights(w), Region{}, 4).angle_deg, 45.0, 1e-12);
    EXPECT_THROW(boundary_grid(LinearBinaryModel(3), Region{}, 4), ModeError);
}

TEST(JsonViews, NonFiniteBecomesNull) {
    Certificate c = finish_certificate("x", 1.0, 0.5, 0.1, 2.0);
    EXPECT_NEAR(c.slack, 0.3, 1e-15);
    const auto j = to_json(c);
    EXPECT_TRUE(j["grouped_opt_value"].is_null());
    EXPECT_EQ(j["satisfied"], true);
    VarianceReport r;
    EXPECT_TRUE(to_json(r)["target_output_variance"].is_null());
}
