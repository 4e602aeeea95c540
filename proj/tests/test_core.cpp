#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "serbf/core.hpp"
#include "serbf/random.hpp"
#include "test_util.hpp"

using namespace serbf;

TEST(Rotation, MatchesFrozenProduct)
{
    const Mat3 r = rotation_matrix(Vec3(0.3, -0.4, 0.5));
    const double expected[3][3] = {{0.8083070667743452, -0.35701964169862993, 0.46816307120920625},
                                   {0.4415801631371558, 0.8935594087270837, -0.08098482943778708},
                                   {-0.3894183423086505, 0.2721921352954314, 0.879923176281257}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(r(i, j), expected[i][j], 1e-15);
}

TEST(Rotation, IsOrthonormal)
{
    SplitMix64 rng(3);
    for (int k = 0; k < 50; ++k) {
        const Mat3 r = rotation_matrix(testing_util::random_vec(rng, -4.0, 4.0));
        EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-14);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
    }
}

TEST(ErbfEval, FrozenValue)
{
    const ErbfBasis b{Vec3(0.1, -0.2, 0.3), Vec3(1.5, 0.7, 2.0), Vec3(0.3, -0.4, 0.5), 1.0};
    EXPECT_NEAR(erbf_eval(Vec3(0.4, 0.1, -0.2), b), 0.36051590461743493, 1e-15);
}

TEST(ErbfEval, OneAtCenter)
{
    const ErbfBasis b{Vec3(1, 2, 3), Vec3(4, 5, 6), Vec3(1, 1, 1), 0.5};
    EXPECT_EQ(erbf_eval(b.center, b), 1.0);
}

TEST(ErbfEval, PeriodicInAngles)
{
    SplitMix64 rng(11);
    for (int k = 0; k < 100; ++k) {
        ErbfBasis b{testing_util::random_vec(rng, -1, 1), testing_util::random_vec(rng, 0.3, 3),
                    testing_util::random_vec(rng, -3, 3), 1.0};
        const Vec3 x = testing_util::random_vec(rng, -1, 1);
        const double base = erbf_eval(x, b);
        for (int a = 0; a < 3; ++a) {
            ErbfBasis shifted = b;
            shifted.angles[a] += 2.0 * std::numbers::pi;
            EXPECT_NEAR(erbf_eval(x, shifted), base, 1e-12);
        }
    }
}

TEST(ErbfEval, DecreasesAlongRays)
{
    SplitMix64 rng(12);
    for (int k = 0; k < 50; ++k) {
        ErbfBasis b{testing_util::random_vec(rng, -1, 1), testing_util::random_vec(rng, 0.3, 3),
                    testing_util::random_vec(rng, -3, 3), 1.0};
        const Vec3 dir = testing_util::random_vec(rng, -1, 1).normalized();
        double prev = 1.0;
        for (int s = 1; s <= 40; ++s) {
            const double v = erbf_eval(b.center + 0.05 * s * dir, b);
            EXPECT_LE(v, prev);
            prev = v;
        }
    }
}

TEST(ModelEval, FrozenThreeBasisValues)
{
    ErbfModel m;
    m.bases = {{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(0, 0, 0), 1.2},
               {Vec3(0.5, 0, 0), Vec3(2, 1, 0.5), Vec3(0.1, 0.2, 0.3), -0.7},
               {Vec3(0, 0.3, -0.2), Vec3(0.8, 1.3, 1.1), Vec3(-0.5, 0.4, 0.9), 0.9}};
    const PointList pts = {Vec3(0.1, 0.2, 0.3), Vec3(-0.4, 0.5, 0.05)};
    const auto p = model_eval(pts, m).values;
    EXPECT_NEAR(p[0], 1.6582890006865267, 1e-14);
    EXPECT_NEAR(p[1], 1.6147378859983954, 1e-14);
}

TEST(ModelEval, NegativeWeightContributesNegatively)
{
    ErbfModel m;
    m.bases = {{Vec3::Zero(), Vec3::Ones(), Vec3::Zero(), -0.5}};
    const PointList pts = {Vec3::Zero()};
    EXPECT_DOUBLE_EQ(model_eval(pts, m).values[0], -0.25);
}

TEST(ModelEval, EmptyModelThrows)
{
    const PointList pts = {Vec3::Zero()};
    EXPECT_THROW(model_eval(pts, ErbfModel{}), std::invalid_argument);
}

TEST(ModelEval, ThreadCountDoesNotChangeResults)
{
    SplitMix64 rng(5);
    const auto m = testing_util::random_model(rng, 7);
    const auto pts = testing_util::random_points(rng, 3000, -1.5, 1.5);
    set_thread_count(1);
    const auto a = model_eval(pts, m).values;
    set_thread_count(4);
    const auto b = model_eval(pts, m).values;
    set_thread_count(1);
    EXPECT_EQ(a, b);
}

TEST(Normalize, KnownValues)
{
    const std::vector<double> s = {-1.0, 0.0, 0.5};
    const auto n = normalize_sdf(s);
    EXPECT_EQ(n.norm_m, -1.0);
    EXPECT_DOUBLE_EQ(n.norm_h, std::numbers::ln2);
    EXPECT_DOUBLE_EQ(n.labels[0], 2.0);
    EXPECT_DOUBLE_EQ(n.labels[1], 1.0);
    EXPECT_NEAR(n.labels[2], 0.42044820762685731, 1e-16);
    EXPECT_NEAR(normalize_sdf_value(0.1, -0.5, normalization_h(-0.5)), 0.73713460864555058, 1e-16);
}

TEST(Normalize, LabelsInRangeAndOrdered)
{
    SplitMix64 rng(9);
    std::vector<double> s(500);
    for (auto& v : s)
        v = -0.7 + 3.0 * rng.uniform();
    s[17] = -0.8;
    const auto n = normalize_sdf(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_GT(n.labels[i], 0.0);
        EXPECT_LE(n.labels[i], 2.0);
        EXPECT_EQ(n.labels[i] > 1.0, s[i] < 0.0);
    }
}

TEST(Normalize, RejectsEmptyOrNonNegativeMinimum)
{
    EXPECT_THROW(normalize_sdf(std::vector<double>{}), std::invalid_argument);
    EXPECT_THROW(normalize_sdf(std::vector<double>{0.0, 1.0}), std::invalid_argument);
}

TEST(Normalize, DenormalizeRejectsOutOfRange)
{
    EXPECT_THROW(denormalize_sdf(0.0, -1.0, std::numbers::ln2), std::domain_error);
    EXPECT_THROW(denormalize_sdf(2.5, -1.0, std::numbers::ln2), std::domain_error);
    EXPECT_DOUBLE_EQ(denormalize_sdf(2.0, -1.0, std::numbers::ln2), -1.0);
    EXPECT_NEAR(denormalize_sdf(1.0, -1.0, std::numbers::ln2), 0.0, 1e-15);
}

TEST(Normalize, RoundTrip)
{
    SplitMix64 rng(21);
    const double m = -0.37;
    const double h = normalization_h(m);
    for (int k = 0; k < 2000; ++k) {
        const double s = m + (-4.0 * m) * rng.uniform();
        const double back = denormalize_sdf(normalize_sdf_value(s, m, h), m, h);
        EXPECT_LT(std::abs(back - s), 1e-9 * std::max(std::abs(s), std::abs(m)));
    }
}

TEST(Model, ParamCountIsTenPerBasis)
{
    ErbfModel m;
    for (int k = 0; k < 13; ++k)
        m.bases.emplace_back();
    EXPECT_EQ(m.param_count(), 130u);
}

TEST(Basis, ValidateRejectsBadAxes)
{
    ErbfBasis b;
    b.axes = Vec3(1, 0, 1);
    EXPECT_THROW(validate_basis(b), std::invalid_argument);
    b.axes = Vec3(1, 1, 1);
    b.weight = std::nan("");
    EXPECT_THROW(validate_basis(b), std::invalid_argument);
}
