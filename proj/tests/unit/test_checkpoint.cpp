#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "pen/checkpoint.hpp"
#include "pen/optim.hpp"

namespace pen {
namespace {

using test::TempDir;

TEST(Checkpoint, RoundTripIsBitExact)
{
    TempDir dir("ckpt");
    std::mt19937_64 rng(1);
    ParameterSet<float> params;
    params.add("a", uniform_tensor<float>({3, 4}, 2.0f, rng));
    params.add("b.bias", uniform_tensor<float>({7}, 1.0f, rng));
    params.add("scalar", Tensor<float>::scalar(-0.0f));
    write_checkpoint(dir / "w.penw", snapshot(params));
    const auto back = read_checkpoint(dir / "w.penw");
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].name, params.items()[i].name);
        EXPECT_EQ(back[i].value.shape, params.items()[i].value.shape);
        EXPECT_EQ(std::memcmp(back[i].value.data.data(), params.items()[i].value.data.data(),
                              back[i].value.size() * sizeof(float)),
                  0);
    }
    write_checkpoint(dir / "again.penw", back);
    EXPECT_EQ(test::slurp(dir / "w.penw"), test::slurp(dir / "again.penw"));
}

TEST(Checkpoint, HeaderLayout)
{
    TempDir dir("ckpt");
    write_checkpoint(dir / "w.penw", {{"x", Tensor<float>({2}, std::vector<float>{1.0f, 2.0f})}});
    const std::string bytes = test::slurp(dir / "w.penw");
    // magic, version, count, name len, name, rank, dim, 2 floats
    ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 1 + 1 + 4 + 8);
    EXPECT_EQ(bytes.substr(0, 4), "PENW");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 1);
    EXPECT_EQ(bytes[14], 'x');
    EXPECT_EQ(bytes[15], 1);
    EXPECT_EQ(bytes[16], 2);
}

TEST(Checkpoint, RejectsCorruptFiles)
{
    TempDir dir("ckpt");
    write_checkpoint(dir / "w.penw", {{"x", Tensor<float>({2}, 1.0f)}});
    const std::string good = test::slurp(dir / "w.penw");
    test::spit(dir / "trailing.penw", good + "z");
    EXPECT_THROW(read_checkpoint(dir / "trailing.penw"), DataError);
    test::spit(dir / "short.penw", good.substr(0, good.size() - 1));
    EXPECT_THROW(read_checkpoint(dir / "short.penw"), DataError);
    test::spit(dir / "magic.penw", "XXXX" + good.substr(4));
    EXPECT_THROW(read_checkpoint(dir / "magic.penw"), DataError);
    EXPECT_THROW(read_checkpoint(dir / "absent.penw"), DataError);
}

TEST(Checkpoint, RestoreChecksNamesAndShapes)
{
    ParameterSet<double> params;
    params.add("w", Tensor<double>({2, 2}));
    EXPECT_THROW(restore(params, {{"v", Tensor<float>({2, 2})}}), DataError);
    EXPECT_THROW(restore(params, {{"w", Tensor<float>({4})}}), DataError);
    restore(params, {{"w", Tensor<float>({2, 2}, 0.5f)}});
    EXPECT_EQ(params.find("w")->value[3], 0.5);
    EXPECT_THROW(params.add("w", Tensor<double>({1})), Error);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    ParameterSet<double> params;
    auto& p = params.add("p", Tensor<double>({2}, std::vector<double>{1.0, -1.0}));
    p.grad = Tensor<double>({2}, std::vector<double>{0.3, -5.0});
    Adam<double> opt(params, {0.01, 0.9, 0.999, 1e-8});
    opt.step();
    // Bias-corrected first step is lr * sign(g).
    EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-7);
    EXPECT_NEAR(p.value[1], -1.0 + 0.01, 1e-7);
    EXPECT_EQ(opt.steps(), 1u);
}

}  // namespace
}  // namespace pen
