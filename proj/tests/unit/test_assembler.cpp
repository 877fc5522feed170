#include <random>
#include <set>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "pen/assembler.hpp"
#include "pen/error.hpp"
#include "pen_oracle/oracle.hpp"

namespace pen {
namespace {

using test::record;

TEST(Layout, SmallLayoutArithmetic)
{
    const LayoutOffsets o = layout_offsets({12, 6, 3});
    EXPECT_EQ(o.total, 37u);
    EXPECT_EQ(o.infer, (Span{1, 13}));
    EXPECT_EQ(o.infer_prompt, (Span{13, 16}));
    EXPECT_EQ(o.sep_infer, 16u);
    EXPECT_EQ(o.neg, (Span{17, 23}));
    EXPECT_EQ(o.pos, (Span{27, 33}));
    // Label slots sit at the end of each "it was X" span.
    EXPECT_EQ(o.mask, 15u);
    EXPECT_EQ(o.neg_label, 25u);
    EXPECT_EQ(o.pos_label, 35u);
    EXPECT_EQ(o, oracle::layout({12, 6, 3}));
}

TEST(Layout, DefaultLayoutMatchesOracle)
{
    const LayoutOffsets o = layout_offsets({});
    EXPECT_EQ(o, oracle::layout({}));
    EXPECT_EQ(o.total, 1u + 195 + 1 + 67 + 1 + 67 + 1);
    EXPECT_EQ(layout_offsets({}), o);
}

TEST(Layout, DoublingDemoLengthShiftsPosRegionByDemoLength)
{
    const LayoutOffsets a = layout_offsets({20, 5, 3});
    const LayoutOffsets b = layout_offsets({20, 10, 3});
    EXPECT_EQ(b.pos.begin - a.pos.begin, 5u);
    EXPECT_EQ(b.neg.begin, a.neg.begin);
}

TEST(Layout, SwappedDemoOrder)
{
    RegionLayout l{12, 6, 3, false};
    const LayoutOffsets o = layout_offsets(l);
    EXPECT_LT(o.pos.begin, o.neg.begin);
    EXPECT_EQ(o, oracle::layout(l));
}

TEST(Layout, RejectsDegenerateLengths)
{
    EXPECT_THROW(layout_offsets({0, 6, 3}), ConfigError);
    EXPECT_THROW(layout_offsets({12, 0, 3}), ConfigError);
    EXPECT_THROW(layout_offsets({12, 6, 0}), ConfigError);
    EXPECT_THROW(layout_offsets({6, 6, 3}), ConfigError);
}

TEST(Tokenize, LowercasesAndSplitsPunctuation)
{
    EXPECT_EQ(tokenize("Hello, WORLD!  it's"),
              (std::vector<std::string>{"hello", ",", "world", "!", "it", "'", "s"}));
    EXPECT_TRUE(tokenize("   ").empty());
}

TEST(RegionTokens, JoinsPartsWithDots)
{
    EXPECT_EQ(region_tokens(record("a", "x y", Label::Hateful, "cap", {"k"})),
              (std::vector<std::string>{"x", "y", ".", "cap", ".", "k"}));
    EXPECT_EQ(region_tokens(record("a", "", Label::Hateful, "cap")), (std::vector<std::string>{"cap"}));
}

TEST(Vocabulary, ReservedPromptAndMinFreq)
{
    const std::vector<MemeRecord> corpus{record("a", "x y x", Label::Hateful), record("b", "z x", Label::NonHateful)};
    const Vocabulary all = Vocabulary::build(corpus, 1);
    EXPECT_TRUE(all.contains("y"));
    EXPECT_EQ(all.token(Vocabulary::kMask), "[mask]");
    EXPECT_EQ(all.token(all.neg_label_id()), "bad");
    EXPECT_EQ(all.token(all.pos_label_id()), "good");
    EXPECT_EQ(all.id("never-seen"), Vocabulary::kUnk);

    const Vocabulary frequent = Vocabulary::build(corpus, 2);
    EXPECT_TRUE(frequent.contains("x"));
    EXPECT_FALSE(frequent.contains("y"));
    EXPECT_EQ(frequent.id("y"), Vocabulary::kUnk);

    PromptConfig clash;
    clash.hateful_word = "two words";
    EXPECT_THROW(Vocabulary::build(corpus, 1, clash), ConfigError);
}

struct Fixture {
    MemeRecord inst = record("x1", "Hello, world", Label::Hateful, "cat");
    MemeRecord neg = record("d1", "ugly", Label::Hateful);
    MemeRecord pos = record("d2", "nice dog", Label::NonHateful);
    Vocabulary vocab = Vocabulary::build({inst, neg, pos}, 1);
};

TEST(Assemble, GoldenDump)
{
    Fixture f;
    const AssembledSequence s = assemble(f.inst, f.neg, f.pos, {4, 2, 3}, f.vocab);
    EXPECT_EQ(dump(s),
              "id=x1 demo_neg=d1 demo_pos=d2 label=hateful n=21 span.infer=1:5 span.infer_prompt=5:8 "
              "span.neg=9:11 span.neg_prompt=11:14 span.pos=15:17 span.pos_prompt=17:20 real.infer=4 "
              "real.neg=1 real.pos=2 special.mask=7 special.neg=13 special.pos=19 "
              "tokens=2,10,11,12,9,7,8,4,3,14,0,7,8,5,3,15,16,7,8,6,3");
}

TEST(Assemble, SpecialTokensAtFixedPositions)
{
    Fixture f;
    const RegionLayout layout{12, 6, 3};
    const AssembledSequence s = assemble(f.inst, f.neg, f.pos, layout, f.vocab);
    ASSERT_EQ(s.token_ids.size(), 37u);
    EXPECT_EQ(s.token_ids[s.offsets.mask], Vocabulary::kMask);
    EXPECT_EQ(s.token_ids[s.offsets.neg_label], f.vocab.neg_label_id());
    EXPECT_EQ(s.token_ids[s.offsets.pos_label], f.vocab.pos_label_id());
    EXPECT_EQ(s.token_ids[0], Vocabulary::kStart);
    EXPECT_EQ(s.token_ids[36], Vocabulary::kSep);
    EXPECT_EQ(s.label, Label::Hateful);
    // Round trip of the untruncated instance region.
    EXPECT_EQ(detokenize(f.vocab, s.token_ids, {s.offsets.infer.begin, s.offsets.infer.begin + s.real_lengths.infer}),
              region_tokens(f.inst));
}

TEST(Assemble, HeadTruncationKeepsPromptIntact)
{
    Fixture f;
    MemeRecord longer = record("x2", "a b c d e f g h i j k l m n o p", Label::NonHateful);
    const Vocabulary vocab = Vocabulary::build({longer, f.neg, f.pos}, 1);
    const AssembledSequence s = assemble(longer, f.neg, f.pos, {12, 6, 3}, vocab);
    EXPECT_EQ(s.real_lengths.infer, 12u);
    const auto kept = detokenize(vocab, s.token_ids, s.offsets.infer);
    EXPECT_EQ(kept.front(), "a");
    EXPECT_EQ(kept.back(), "l");
    EXPECT_EQ(detokenize(vocab, s.token_ids, s.offsets.infer_prompt),
              (std::vector<std::string>{"it", "was", "[mask]"}));
}

TEST(Assemble, EmptyInstanceIsAllPad)
{
    Fixture f;
    MemeRecord empty = record("e", "", Label::NonHateful);
    const AssembledSequence s = assemble(empty, f.neg, f.pos, {12, 6, 3}, f.vocab);
    EXPECT_EQ(s.real_lengths.infer, 0u);
    for (std::size_t i = s.offsets.infer.begin; i < s.offsets.infer.end; ++i) {
        EXPECT_EQ(s.token_ids[i], Vocabulary::kPad);
    }
    EXPECT_EQ(s.offsets, layout_offsets({12, 6, 3}));
}

TEST(Assemble, WrongDemoLabelsRejected)
{
    Fixture f;
    EXPECT_THROW(assemble(f.inst, f.pos, f.neg, {12, 6, 3}, f.vocab), DataError);
    EXPECT_THROW(assemble(f.inst, f.neg, f.pos, {12, 6, 2}, f.vocab), ConfigError);
}

TEST(Assemble, FixedOffsetsAcrossRandomRecords)
{
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> len(0, 40);
    const RegionLayout layout{16, 8, 3};
    std::vector<MemeRecord> recs;
    for (int i = 0; i < 200; ++i) {
        std::string text;
        for (int k = len(rng); k >= 0; --k) {
            text += "w" + std::to_string(k % 7) + " ";
        }
        recs.push_back(record(std::to_string(i), text, i % 2 ? Label::Hateful : Label::NonHateful));
    }
    const Vocabulary vocab = Vocabulary::build(recs, 1);
    const LayoutOffsets expected = oracle::layout(layout);
    Fixture f;
    for (const auto& r : recs) {
        const auto s = assemble(r, f.neg, f.pos, layout, vocab);
        EXPECT_EQ(s.offsets, expected);
        EXPECT_EQ(s.token_ids.size(), expected.total);
        EXPECT_EQ(s.token_ids[expected.mask], Vocabulary::kMask);
    }
}

}  // namespace
}  // namespace pen
