#include "oracles.hpp"
#include "ssmae/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace ssmae;

TEST(ReconLoss, PerfectReconstructionIsZero) {
    const Matrix x = Matrix::Random(16, 48);
    const std::vector<int> masked = {1, 5, 7};
    Matrix g;
    EXPECT_EQ(recon_loss(x, x, masked, &g), 0.0);
    EXPECT_TRUE((g.array() == 0.0).all());
}

TEST(ReconLoss, OneMaskedPatchOffByPointOne) {
    const Matrix x = Matrix::Zero(4, 48);
    Matrix pred = x;
    pred.row(2).setConstant(0.1);
    const std::vector<int> masked = {2};
    EXPECT_NEAR(recon_loss(pred, x, masked), 0.48, 1e-12);
    EXPECT_NEAR(recon_loss(pred, x, masked, nullptr, ReconReduction::elementwise_mean), 0.01, 1e-12);
}

TEST(ReconLoss, MeanOverMaskedPatchesOnly) {
    Matrix x = Matrix::Zero(4, 3);
    Matrix pred = x;
    pred.row(0).setConstant(1.0);  // ||.||^2 = 3
    pred.row(1).setConstant(2.0);  // ||.||^2 = 12
    pred.row(3).setConstant(5.0);  // visible
    const std::vector<int> masked = {0, 1};
    EXPECT_NEAR(recon_loss(pred, x, masked), 7.5, 1e-12);
}

TEST(ReconLoss, VisiblePatchesDoNotMatterAndHaveZeroGradient) {
    std::mt19937_64 rng(1);
    const Matrix x = Matrix::Random(8, 12);
    Matrix pred = Matrix::Random(8, 12);
    const std::vector<int> masked = {0, 3, 6};
    Matrix g;
    const double base = recon_loss(pred, x, masked, &g);
    for (int v : {1, 2, 4, 5, 7}) {
        EXPECT_TRUE((g.row(v).array() == 0.0).all());
        pred.row(v).setConstant(123.0);
    }
    EXPECT_EQ(recon_loss(pred, x, masked), base);
    for (int m : masked) EXPECT_GT(g.row(m).norm(), 0.0);
}

TEST(ReconLoss, GradientMatchesDefinition) {
    const Matrix x = Matrix::Random(5, 6);
    const Matrix pred = Matrix::Random(5, 6);
    const std::vector<int> masked = {1, 4};
    Matrix g;
    recon_loss(pred, x, masked, &g);
    for (int m : masked) EXPECT_TRUE(g.row(m).isApprox((pred.row(m) - x.row(m)) * (2.0 / 2), 1e-14));
}

TEST(ReconLoss, Rejections) {
    const Matrix x = Matrix::Zero(4, 3);
    EXPECT_THROW(recon_loss(x, x, std::vector<int>{}), Error);
    EXPECT_THROW(recon_loss(x, Matrix::Zero(4, 2), std::vector<int>{0}), Error);
    EXPECT_THROW(recon_loss(x, x, std::vector<int>{4}), Error);
}

TEST(CrossEntropy, UniformLogits) {
    EXPECT_NEAR(ce_loss(RowVector::Zero(10), 3), std::log(10.0), 1e-12);
    EXPECT_NEAR(ce_loss(RowVector::Zero(2), 0), 0.693147180559945, 1e-12);
    for (int k = 2; k <= 100; k += 7) EXPECT_NEAR(ce_loss(RowVector::Constant(k, 4.2), k - 1), std::log(k), 1e-9);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
    RowVector z = RowVector::Zero(10);
    z(4) = 50.0;
    EXPECT_NEAR(ce_loss(z, 4), 0.0, 1e-9);
}

TEST(CrossEntropy, MatchesHighPrecisionReference) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 20);
        RowVector z(k);
        std::vector<double> zv(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) zv[static_cast<std::size_t>(i)] = z(i) = u(rng);
        const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        const long double ref = oracle::cross_entropy(zv, label);
        ASSERT_NEAR(ce_loss(z, label), static_cast<double>(ref), 1e-9 * std::max<long double>(1.0L, ref));
    }
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
    RowVector z(4);
    z << 0.3, -1.2, 2.0, 0.1;
    RowVector g;
    ce_loss(z, 2, &g);
    RowVector expected = softmax(z);
    expected(2) -= 1.0;
    EXPECT_TRUE(g.isApprox(expected, 1e-14));
    EXPECT_NEAR(g.sum(), 0.0, 1e-14);
}

TEST(CrossEntropy, RejectsBadLabel) {
    EXPECT_THROW(ce_loss(RowVector::Zero(3), 3), Error);
    EXPECT_THROW(ce_loss(RowVector::Zero(3), -1), Error);
}

TEST(Softmax, SumsToOneAndKeepsArgmax) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 20.0);
    for (int t = 0; t < 100; ++t) {
        RowVector z(7);
        for (int i = 0; i < 7; ++i) z(i) = n(rng);
        const RowVector p = softmax(z);
        EXPECT_NEAR(p.sum(), 1.0, 1e-12);
        Eigen::Index a, b;
        z.maxCoeff(&a);
        p.maxCoeff(&b);
        EXPECT_EQ(a, b);
    }
}

TEST(ClsLoss, Examples) {
    const double sup[] = {0.6931};
    const double pseudo[] = {0.4};
    EXPECT_NEAR(cls_loss(sup, pseudo, 0.75), 0.9931, 1e-12);
    EXPECT_NEAR(cls_loss(sup, pseudo, 0.0), 0.6931, 1e-12);
    const double zero[] = {0.0};
    EXPECT_EQ(cls_loss(zero, {}, 0.75), 0.0);
    const double sup2[] = {1.0, 3.0};
    const double pseudo2[] = {2.0, 4.0, 6.0};
    EXPECT_NEAR(cls_loss(sup2, pseudo2, 0.5), 2.0 + 0.5 * 4.0, 1e-12);
}

TEST(TotalLoss, Examples) {
    EXPECT_NEAR(total_loss(0.5, 0.2, 1.0), 0.7, 1e-15);
    EXPECT_EQ(total_loss(0.5, 0.2, 0.0), 0.5);
    EXPECT_EQ(total_loss(0.5, 0.0, 1.0), 0.5);
}

TEST(TotalLoss, RejectsNonFinite) {
    try {
        total_loss(std::numeric_limits<double>::quiet_NaN(), 0.1, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "non_finite");
    }
    EXPECT_THROW(total_loss(0.1, std::numeric_limits<double>::infinity(), 1.0), Error);
}

TEST(Linearity, TotalAndClsLossInTheirWeights) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    const double sup[] = {0.7, 1.1, 0.2};
    const double pseudo[] = {0.4, 0.9};
    const double sup_mean = (0.7 + 1.1 + 0.2) / 3, pseudo_mean = 0.65;
    for (int t = 0; t < 5; ++t) {
        const double lp = u(rng), lam = u(rng), recon = u(rng);
        const double cls = cls_loss(sup, pseudo, lp);
        EXPECT_NEAR(cls, sup_mean + lp * pseudo_mean, 1e-12);
        EXPECT_NEAR(cls_loss(sup, pseudo, 2 * lp) - cls, lp * pseudo_mean, 1e-12);
        const double tot = total_loss(recon, cls, lam);
        EXPECT_NEAR(tot, recon + lam * cls, 1e-12);
        EXPECT_NEAR(total_loss(recon, cls, 2 * lam) - tot, lam * cls, 1e-12);
    }
}
