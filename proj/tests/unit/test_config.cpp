#include <gtest/gtest.h>

#include "helpers.hpp"
#include "pen/config.hpp"

namespace pen {
namespace {

using nlohmann::json;

TEST(Config, EmptyDocumentGivesDefaults)
{
    const RunConfig cfg = parse_config(json::object());
    EXPECT_EQ(cfg.layout, RegionLayout{});
    EXPECT_EQ(cfg.trainer.epochs, 20u);
    EXPECT_EQ(cfg.trainer.batch_size, 16u);
    EXPECT_DOUBLE_EQ(cfg.loss.alpha, 0.1);
    EXPECT_DOUBLE_EQ(cfg.loss.tau2, 0.3);
    EXPECT_DOUBLE_EQ(cfg.trainer.resolved_learning_rate(EncoderKind::Tiny), 1e-3);
    EXPECT_DOUBLE_EQ(cfg.trainer.resolved_learning_rate(EncoderKind::File), 5e-4);
    EXPECT_EQ(cfg.trainer.views, ViewSet::all());
    EXPECT_EQ(cfg.eval_seed(), 0u);
}

TEST(Config, UnknownKeysAndBadTypesRejected)
{
    EXPECT_THROW(parse_config(json::parse(R"({"trainer": {"epoch": 3}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"bogus": {}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"trainer": {"epochs": "3"}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"loss": {"formulation": "other"}})")), ConfigError);
    try {
        parse_config(json::parse(R"({"loss": {"alpha": 0.1, "gamma": 1}})"));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("loss.gamma"), std::string::npos) << e.what();
    }
}

TEST(Config, InvalidValuesRejected)
{
    EXPECT_THROW(parse_config(json::parse(R"({"trainer": {"epochs": 0}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"trainer": {"batch_size": 1}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"trainer": {"views": []}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"trainer": {"pmp_enabled": false}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"layout": {"len_prompt": 4}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"encoder": {"kind": "file"}})")), ConfigError);
    EXPECT_THROW(parse_config(json::parse(R"({"loss": {"tau1": 0}})")), ConfigError);
}

TEST(Config, OverridesApplyDottedKeys)
{
    json doc = json::object();
    apply_override(doc, "loss.alpha=0.25");
    apply_override(doc, "trainer.views=[\"s1\"]");
    apply_override(doc, "trainer.pmp_enabled=false");
    apply_override(doc, "layout.hateful_word=evil");
    const RunConfig cfg = parse_config(doc);
    EXPECT_DOUBLE_EQ(cfg.loss.alpha, 0.25);
    EXPECT_EQ(cfg.trainer.views, ViewSet::only_s1());
    EXPECT_FALSE(cfg.trainer.pmp_enabled);
    EXPECT_EQ(cfg.prompt.hateful_word, "evil");
    EXPECT_THROW(apply_override(doc, "noequals"), ConfigError);
}

TEST(Config, SnapshotRoundTrip)
{
    json doc = json::parse(R"({
        "corpus": {"synthetic": {"n_train": 40, "noise_rate": 0.1}},
        "layout": {"len_infer": 20, "len_demo": 8},
        "loss": {"formulation": "literal_ratio", "beta": 0.3},
        "trainer": {"precision": 64, "demo_policy": "fixed", "learning_rate": 0.01, "views": ["s1", "s3"]},
        "eval": {"seeds": [1, 2], "ablation": ["w/o L1"]}
    })");
    const RunConfig cfg = parse_config(doc);
    const auto snap = to_json(cfg);
    const RunConfig back = parse_config(json::parse(snap.dump()));
    EXPECT_EQ(to_json(back).dump(), snap.dump());
    EXPECT_EQ(back.trainer.precision, Precision::F64);
    EXPECT_EQ(back.trainer.demo_policy, DemoPolicy::FixedPerSample);
    EXPECT_EQ(back.corpus.synthetic->n_train, 40u);
    EXPECT_EQ(back.eval.seeds, (std::vector<std::uint64_t>{1, 2}));
}

TEST(Config, LoadResolvesRelativePaths)
{
    test::TempDir dir("config");
    test::spit(dir / "run.json", R"({"corpus": {"train_path": "data/train.jsonl", "test_path": "/abs/test.jsonl"}})");
    const RunConfig cfg = load_config(dir / "run.json", {"trainer.seed=9"});
    EXPECT_EQ(cfg.corpus.train_path, (dir / "data/train.jsonl").string());
    EXPECT_EQ(cfg.corpus.test_path, "/abs/test.jsonl");
    EXPECT_EQ(cfg.trainer.seed, 9u);
    test::spit(dir / "broken.json", "{");
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
    EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
}

}  // namespace
}  // namespace pen
