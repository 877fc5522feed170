#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "pen/corpus.hpp"
#include "pen/error.hpp"

namespace pen {
namespace {

using test::record;
using test::spit;
using test::TempDir;

TEST(Corpus, LoadsTextAndLabelLines)
{
    TempDir dir("corpus");
    spit(dir / "c.jsonl", "{\"text\":\"a\",\"label\":1}\n{\"text\":\"b\",\"label\":0}\n");
    const LoadedCorpus c = load_corpus(dir / "c.jsonl");
    ASSERT_EQ(c.records.size(), 2u);
    EXPECT_EQ(c.records[0].label, Label::Hateful);
    EXPECT_EQ(c.records[1].label, Label::NonHateful);
    EXPECT_EQ(c.records[0].id, "c.jsonl:1");
    EXPECT_EQ(c.stats, (SplitStats{1, 1, 0, 0}));
}

TEST(Corpus, EmptyFileGivesZeroStats)
{
    TempDir dir("corpus");
    spit(dir / "e.jsonl", "");
    const LoadedCorpus c = load_corpus(dir / "e.jsonl", {}, Split::Test);
    EXPECT_TRUE(c.records.empty());
    EXPECT_EQ(c.stats.total(), 0u);
}

TEST(Corpus, SkipsBlankLinesAndUnknownFields)
{
    TempDir dir("corpus");
    spit(dir / "c.jsonl",
         "\n{\"id\":7,\"text\":\"x\",\"label\":\"Harmful\",\"img\":\"a.png\"}\n   \n"
         "{\"id\":\"q\",\"text\":\"y\",\"caption\":\"c\",\"knowledge\":[\"k1\",\"k2\"],\"label\":\"harmless\"}\n");
    const LoadedCorpus c = load_corpus(dir / "c.jsonl", {}, Split::Test);
    ASSERT_EQ(c.records.size(), 2u);
    EXPECT_EQ(c.records[0].id, "7");
    EXPECT_EQ(c.records[0].label, Label::Hateful);
    EXPECT_EQ(c.records[1].knowledge, (std::vector<std::string>{"k1", "k2"}));
    EXPECT_EQ(c.stats, (SplitStats{0, 0, 1, 1}));
}

TEST(Corpus, ErrorsNameTheLine)
{
    TempDir dir("corpus");
    const auto expect_line = [&](const std::string& body, const std::string& needle) {
        spit(dir / "bad.jsonl", body);
        try {
            load_corpus(dir / "bad.jsonl");
            FAIL() << "expected DataError for " << body;
        } catch (const DataError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    expect_line("{\"text\":\"a\",\"label\":1}\n{\"text\":\"a\",\n", "bad.jsonl:2");
    expect_line("{\"text\":\"a\"}\n", "bad.jsonl:1");
    expect_line("{\"text\":\"a\",\"label\":\"maybe\"}\n", "maybe");
    expect_line("{\"text\":\"   \",\"label\":1}\n", "empty");
    EXPECT_THROW(load_corpus(dir / "missing.jsonl"), DataError);
}

TEST(Corpus, WriteThenLoadIsIdentity)
{
    TempDir dir("corpus");
    const std::vector<MemeRecord> recs{
        record("a", "Hello there", Label::Hateful, "a cat", {"race: none", "entity: x"}),
        record("b", "quoted \"text\" here", Label::NonHateful),
    };
    write_corpus(dir / "rt.jsonl", recs);
    EXPECT_EQ(load_corpus(dir / "rt.jsonl").records, recs);
}

TEST(Corpus, HarmShapedTally)
{
    std::vector<MemeRecord> train;
    for (std::size_t i = 0; i < 1064 + 1949; ++i) {
        train.push_back(record(std::to_string(i), "t", i < 1064 ? Label::Hateful : Label::NonHateful));
    }
    std::vector<MemeRecord> test;
    for (std::size_t i = 0; i < 124 + 230; ++i) {
        test.push_back(record(std::to_string(i), "t", i < 124 ? Label::Hateful : Label::NonHateful));
    }
    SplitStats s = tally(train, Split::Train);
    s += tally(test, Split::Test);
    EXPECT_EQ(s, (SplitStats{1064, 1949, 124, 230}));
}

DemonstrationPool small_pool(std::size_t per_class)
{
    std::vector<MemeRecord> train;
    for (std::size_t i = 0; i < per_class; ++i) {
        train.push_back(record("h" + std::to_string(i), "x", Label::Hateful));
        train.push_back(record("n" + std::to_string(i), "y", Label::NonHateful));
    }
    return DemonstrationPool::from_training(train);
}

TEST(Demonstrations, SingletonPoolIsForced)
{
    const auto pool = small_pool(1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        const DemoPair p = sample_demonstrations(pool, rng);
        EXPECT_EQ(p.hateful->id, "h0");
        EXPECT_EQ(p.non_hateful->id, "n0");
    }
}

TEST(Demonstrations, DeterministicPerSeed)
{
    const auto pool = small_pool(10);
    std::mt19937_64 a(7);
    std::mt19937_64 b(7);
    for (int i = 0; i < 20; ++i) {
        const DemoPair x = sample_demonstrations(pool, a);
        const DemoPair y = sample_demonstrations(pool, b);
        EXPECT_EQ(x.hateful, y.hateful);
        EXPECT_EQ(x.non_hateful, y.non_hateful);
    }
}

TEST(Demonstrations, UniformOverFourRecords)
{
    const auto pool = small_pool(4);
    std::mt19937_64 rng(123);
    std::map<std::string, int> counts;
    for (int i = 0; i < 10000; ++i) {
        counts[sample_demonstrations(pool, rng).hateful->id]++;
    }
    const double sigma = std::sqrt(10000 * 0.25 * 0.75);
    ASSERT_EQ(counts.size(), 4u);
    for (const auto& [id, n] : counts) {
        EXPECT_LT(std::abs(n - 2500), 3 * sigma) << id;
    }
}

TEST(Demonstrations, ExcludedIdNeverDrawn)
{
    const auto pool = small_pool(3);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 500; ++i) {
        const DemoPair p = sample_demonstrations(pool, rng, std::string_view("h1"));
        EXPECT_NE(p.hateful->id, "h1");
    }
    const auto single = small_pool(1);
    EXPECT_THROW(sample_demonstrations(single, rng, std::string_view("h0")), DataError);
    DemonstrationPool empty;
    EXPECT_THROW(sample_demonstrations(empty, rng), DataError);
}

TEST(Demonstrations, PoolLimitKeepsFixedSubset)
{
    std::vector<MemeRecord> train;
    for (std::size_t i = 0; i < 50; ++i) {
        train.push_back(record("r" + std::to_string(i), "x", i % 2 ? Label::Hateful : Label::NonHateful));
    }
    const auto a = DemonstrationPool::from_training(train, 5, 9);
    const auto b = DemonstrationPool::from_training(train, 5, 9);
    EXPECT_EQ(a.hateful.size(), 5u);
    EXPECT_EQ(a.non_hateful.size(), 5u);
    EXPECT_EQ(a.hateful, b.hateful);
}

bool has_token(const MemeRecord& r, const std::string& tok)
{
    return (" " + r.text + " ").find(" " + tok + " ") != std::string::npos;
}

TEST(Synthetic, NoiseFreeCorpusIsSeparableBySignal)
{
    SyntheticSpec spec;
    const SyntheticCorpus c = generate_synthetic(spec);
    EXPECT_EQ(c.train.size(), 400u);
    EXPECT_EQ(c.test.size(), 100u);
    EXPECT_EQ(tally(c.train, Split::Train).train_hate, 200u);
    for (const auto* split : {&c.train, &c.test}) {
        for (const auto& r : *split) {
            EXPECT_EQ(has_token(r, spec.signal_token), r.label == Label::Hateful) << r.id;
            EXPECT_FALSE(r.caption.empty());
        }
    }
}

TEST(Synthetic, DeterministicPerSeed)
{
    SyntheticSpec spec;
    spec.n_train = 100;
    spec.seed = 5;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    spec.seed = 6;
    EXPECT_NE(generate_synthetic(spec).train, a.train);
}

TEST(Synthetic, NoiseRateWithinBinomialBound)
{
    SyntheticSpec spec;
    spec.n_train = 2000;  // 1000 hateful
    spec.noise_rate = 0.1;
    spec.seed = 3;
    const auto c = generate_synthetic(spec);
    std::size_t with_signal = 0;
    std::size_t hateful = 0;
    for (const auto& r : c.train) {
        if (r.label == Label::Hateful) {
            ++hateful;
            with_signal += has_token(r, spec.signal_token) ? 1 : 0;
        }
    }
    ASSERT_EQ(hateful, 1000u);
    EXPECT_NEAR(static_cast<double>(with_signal), 900.0, 40.0);
}

TEST(Synthetic, RejectsDegenerateSpecs)
{
    SyntheticSpec spec;
    spec.vocab_size = 4;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec = {};
    spec.noise_rate = 0.5;
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    spec = {};
    spec.signal_token = "w3";
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

}  // namespace
}  // namespace pen
