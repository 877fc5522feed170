#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pen/pcl.hpp"
#include "pen_oracle/oracle.hpp"

namespace pen {
namespace {

using D = double;
const double kOrthoLoss = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));  // 0.3133

Tensor<D> mat(std::size_t rows, std::size_t cols, std::vector<D> v)
{
    return Tensor<D>({rows, cols}, std::move(v));
}

Tensor<D> randn(std::size_t rows, std::size_t cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<D> t({rows, cols});
    for (auto& v : t.data) {
        v = n(rng);
    }
    return t;
}

oracle::Mat to_mat(const Tensor<D>& t)
{
    oracle::Mat m(t.dim(0), oracle::Vec(t.dim(1)));
    for (std::size_t r = 0; r < t.dim(0); ++r) {
        for (std::size_t c = 0; c < t.dim(1); ++c) {
            m[r][c] = t[r * t.dim(1) + c];
        }
    }
    return m;
}

const std::vector<Label> kHN{Label::Hateful, Label::NonHateful};

TEST(CrossEntropy, AnalyticValues)
{
    Graph<D> g;
    const std::vector<Label> one{Label::Hateful};
    EXPECT_NEAR(cross_entropy(g.constant(mat(1, 2, {0, 0})), one).value().item(), std::log(2.0), 1e-12);
    const std::vector<Label> other{Label::NonHateful};
    EXPECT_NEAR(cross_entropy(g.constant(mat(1, 2, {0, 0})), other).value().item(), std::log(2.0), 1e-12);
    EXPECT_NEAR(cross_entropy(g.constant(mat(1, 2, {10, -10})), one).value().item(), 2.061153622e-9, 1e-15);
}

TEST(CrossEntropy, PermutationInvariantAndWeighted)
{
    Graph<D> g;
    const auto a = cross_entropy(g.constant(mat(2, 2, {1, 2, 3, -1})), kHN).value().item();
    const std::vector<Label> swapped{Label::NonHateful, Label::Hateful};
    const auto b = cross_entropy(g.constant(mat(2, 2, {3, -1, 1, 2})), swapped).value().item();
    EXPECT_NEAR(a, b, 1e-15);
    // Weights (2, 0) keep only the hateful sample.
    const auto w = cross_entropy(g.constant(mat(2, 2, {1, 2, 3, -1})), kHN, std::array<double, 2>{2.0, 0.0});
    const std::vector<Label> first{Label::Hateful};
    EXPECT_NEAR(w.value().item(), cross_entropy(g.constant(mat(1, 2, {1, 2})), first).value().item(), 1e-15);
}

TEST(L1, SingleLabelBatchIsExactlyZero)
{
    std::mt19937_64 rng(1);
    Graph<D> g;
    const std::vector<Label> same(6, Label::Hateful);
    EXPECT_EQ(l1_category_contrastive(g.constant(randn(6, 4, rng)), same, 0.3).value().item(), 0.0);
}

TEST(L1, OrthogonalPairWithUnitTemperature)
{
    Graph<D> g;
    const auto l = l1_category_contrastive(g.constant(mat(2, 2, {1, 0, 0, 1})), kHN, 1.0);
    EXPECT_NEAR(l.value().item(), kOrthoLoss, 1e-12);
    EXPECT_NEAR(l.value().item(), 0.3133, 1e-4);
}

TEST(L1, NeedsTwoSamples)
{
    Graph<D> g;
    const std::vector<Label> one{Label::Hateful};
    EXPECT_THROW(l1_category_contrastive(g.constant(mat(1, 2, {1, 0})), one, 1.0), ShapeError);
}

TEST(L1, ScaleInvariant)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> factor(0.01, 100.0);
    const std::vector<Label> labels{Label::Hateful, Label::NonHateful, Label::Hateful, Label::NonHateful};
    const Tensor<D> m = randn(4, 3, rng);
    Graph<D> g;
    const double base = l1_category_contrastive(g.constant(m), labels, 0.3).value().item();
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<D> scaled = m;
        for (std::size_t r = 0; r < 4; ++r) {
            const double f = factor(rng);
            for (std::size_t c = 0; c < 3; ++c) {
                scaled[r * 3 + c] *= f;
            }
        }
        EXPECT_NEAR(l1_category_contrastive(g.constant(scaled), labels, 0.3).value().item(), base, 1e-12);
    }
}

TEST(L2, HatefulMaskOnBadToken)
{
    Graph<D> g;
    const std::vector<Label> hate{Label::Hateful};
    const auto l = l2_prompt_contrastive(g.constant(mat(1, 2, {1, 0})), g.constant(mat(1, 2, {1, 0})),
                                         g.constant(mat(1, 2, {0, 1})), hate, 1.0);
    EXPECT_NEAR(l.value().item(), kOrthoLoss, 1e-12);
}

TEST(L2, IdenticalLabelWordsGiveLn2)
{
    std::mt19937_64 rng(3);
    Graph<D> g;
    const Tensor<D> demo = randn(2, 4, rng);
    const auto l = l2_prompt_contrastive(g.constant(randn(2, 4, rng)), g.constant(demo), g.constant(demo), kHN, 0.3);
    EXPECT_NEAR(l.value().item(), std::log(2.0), 1e-12);
}

TEST(L2, DecreasesAsMaskApproachesCorrectLabelWord)
{
    Graph<D> g;
    const std::vector<Label> hate{Label::Hateful};
    double previous = std::numeric_limits<double>::infinity();
    // Mask rotates from orthogonal towards bad = (1, 0, 0) while staying
    // orthogonal to good = (0, 0, 1).
    for (int step = 0; step <= 10; ++step) {
        const double a = step * 0.15;
        const auto l = l2_prompt_contrastive(g.constant(mat(1, 3, {std::sin(a), std::cos(a), 0})),
                                             g.constant(mat(1, 3, {1, 0, 0})), g.constant(mat(1, 3, {0, 0, 1})),
                                             hate, 0.3);
        EXPECT_LT(l.value().item(), previous);
        previous = l.value().item();
    }
}

TEST(Losses, MatchNaiveLoops)
{
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> m_dist(2, 32);
    std::uniform_int_distribution<std::size_t> d_dist(1, 64);
    std::bernoulli_distribution coin(0.5);
    for (int batch = 0; batch < 30; ++batch) {
        const std::size_t M = m_dist(rng);
        const std::size_t d = d_dist(rng);
        std::vector<Label> labels;
        for (std::size_t i = 0; i < M; ++i) {
            labels.push_back(coin(rng) ? Label::Hateful : Label::NonHateful);
        }
        const Tensor<D> masks = randn(M, d, rng);
        const Tensor<D> neg = randn(M, d, rng);
        const Tensor<D> pos = randn(M, d, rng);
        for (const bool literal : {false, true}) {
            const auto form = literal ? ContrastiveForm::LiteralRatio : ContrastiveForm::InfoNce;
            Graph<D> g;
            const double l1 = l1_category_contrastive(g.constant(masks), labels, 0.3, form).value().item();
            const double l2 = l2_prompt_contrastive(g.constant(masks), g.constant(neg), g.constant(pos), labels, 0.3,
                                                    form)
                                  .value()
                                  .item();
            EXPECT_NEAR(l1, oracle::l1(to_mat(masks), labels, 0.3, literal), 1e-9);
            EXPECT_NEAR(l2, oracle::l2(to_mat(masks), to_mat(neg), to_mat(pos), labels, 0.3, literal), 1e-9);
        }
    }
}

TEST(Losses, LiteralRatioPrefersPositivePairToo)
{
    for (const auto form : {ContrastiveForm::InfoNce, ContrastiveForm::LiteralRatio}) {
        Graph<D> g;
        const std::vector<Label> hate{Label::Hateful};
        const auto on_bad = l2_prompt_contrastive(g.constant(mat(1, 2, {1, 0})), g.constant(mat(1, 2, {1, 0})),
                                                  g.constant(mat(1, 2, {0, 1})), hate, 1.0, form);
        const auto on_good = l2_prompt_contrastive(g.constant(mat(1, 2, {0, 1})), g.constant(mat(1, 2, {1, 0})),
                                                   g.constant(mat(1, 2, {0, 1})), hate, 1.0, form);
        EXPECT_LT(on_bad.value().item(), on_good.value().item());
        const std::vector<Label> two{Label::Hateful, Label::Hateful, Label::NonHateful};
        const auto clustered = l1_category_contrastive(g.constant(mat(3, 2, {1, 0, 1, 0, 0, 1})), two, 1.0, form);
        const auto mixed = l1_category_contrastive(g.constant(mat(3, 2, {1, 0, 0, 1, 1, 0})), two, 1.0, form);
        EXPECT_LT(clustered.value().item(), mixed.value().item());
    }
}

TEST(TotalLoss, WeightedSum)
{
    Graph<D> g;
    LossConfig cfg;
    cfg.alpha = 0.1;
    cfg.beta = 0.2;
    const auto t = total_loss(g.constant(Tensor<D>::scalar(1)), g.constant(Tensor<D>::scalar(2)),
                              g.constant(Tensor<D>::scalar(3)), cfg);
    EXPECT_NEAR(t.total.value().item(), 1.8, 1e-15);
    const LossReport r = t.report();
    EXPECT_EQ(r.ce, 1.0);
    EXPECT_EQ(r.l2, 3.0);
    cfg.alpha = cfg.beta = 0.0;
    EXPECT_EQ(total_loss(g.constant(Tensor<D>::scalar(1.25)), g.constant(Tensor<D>::scalar(2)),
                         g.constant(Tensor<D>::scalar(3)), cfg)
                  .total.value()
                  .item(),
              1.25);
}

TEST(TotalLoss, GradientIsLinearInTerms)
{
    std::mt19937_64 rng(5);
    const std::vector<Label> labels{Label::Hateful, Label::NonHateful, Label::NonHateful};
    Parameter<D> m("m", randn(3, 4, rng));
    Parameter<D> s("s", randn(3, 2, rng));
    const Tensor<D> neg = randn(3, 4, rng);
    const Tensor<D> pos = randn(3, 4, rng);
    LossConfig cfg;
    cfg.alpha = 0.4;
    cfg.beta = 0.7;
    const auto grads = [&](int which) {
        m.zero_grad();
        s.zero_grad();
        Graph<D> g;
        const auto mv = g.parameter(m);
        const auto ce = cross_entropy(add(g.parameter(s), matmul(mv, g.constant(Tensor<D>({4, 2}, 0.1)))), labels);
        const auto l1 = l1_category_contrastive(mv, labels, cfg.tau1);
        const auto l2 = l2_prompt_contrastive(mv, g.constant(neg), g.constant(pos), labels, cfg.tau2);
        const Var<D> terms[] = {total_loss(ce, l1, l2, cfg).total, ce, l1, l2};
        g.backward(terms[which]);
        std::vector<double> out(m.grad.data);
        out.insert(out.end(), s.grad.data.begin(), s.grad.data.end());
        return out;
    };
    const auto total = grads(0);
    const auto ce = grads(1);
    const auto l1 = grads(2);
    const auto l2 = grads(3);
    for (std::size_t i = 0; i < total.size(); ++i) {
        EXPECT_NEAR(total[i], ce[i] + cfg.alpha * l1[i] + cfg.beta * l2[i], 1e-12);
    }
}

TEST(LossConfig, Validation)
{
    LossConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.tau1 = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.alpha = -0.1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace pen
