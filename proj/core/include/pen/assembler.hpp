#pragma once

// Fixed-layout prompt sequences:
//
//   [start] infer + "it was [mask]" [sep] hateful demo + "it was bad" [sep]
//           non-hateful demo + "it was good" [sep]
//
// Every region is padded or head-truncated to its fixed length, so span
// boundaries and special-token positions depend only on the RegionLayout.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pen/corpus.hpp"

namespace pen {

using TokenId = std::uint32_t;

struct RegionLayout {
    std::size_t len_infer = 192;
    std::size_t len_demo = 64;
    std::size_t len_prompt = 3;
    // Physical order of the demonstrations; false places the non-hateful
    // demonstration first.
    bool hateful_first = true;

    bool operator==(const RegionLayout&) const = default;
};

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    bool operator==(const Span&) const = default;
};

struct LayoutOffsets {
    std::size_t total = 0;
    std::size_t start = 0;
    Span infer;
    Span infer_prompt;
    Span neg;
    Span neg_prompt;
    Span pos;
    Span pos_prompt;
    std::size_t sep_infer = 0;
    std::size_t sep_neg = 0;
    std::size_t sep_pos = 0;
    // The label slot is the last position of each prompt span.
    std::size_t mask = 0;
    std::size_t neg_label = 0;
    std::size_t pos_label = 0;

    bool operator==(const LayoutOffsets&) const = default;
};

/// Throws ConfigError for zero lengths or len_infer <= len_demo.
void validate(const RegionLayout& layout);
LayoutOffsets layout_offsets(const RegionLayout& layout);

/// Lowercased split on whitespace; each ASCII punctuation character is its
/// own token.
std::vector<std::string> tokenize(std::string_view text);

struct PromptConfig {
    std::vector<std::string> template_words = {"it", "was"};
    std::string hateful_word = "bad";
    std::string non_hateful_word = "good";
};

class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kStart = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kMask = 4;

    /// Reserved tokens first, then corpus tokens with frequency >= min_freq
    /// in first-occurrence order.
    static Vocabulary build(const std::vector<MemeRecord>& corpus, std::size_t min_freq,
                            const PromptConfig& prompt = {});

    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    std::size_t size() const { return tokens_.size(); }
    bool contains(std::string_view token) const;

    TokenId neg_label_id() const { return neg_label_; }
    TokenId pos_label_id() const { return pos_label_; }
    TokenId separator_id() const { return dot_; }
    const std::vector<TokenId>& template_ids() const { return template_; }

private:
    TokenId intern(const std::string& token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId neg_label_ = 0;
    TokenId pos_label_ = 0;
    TokenId dot_ = 0;
    std::vector<TokenId> template_;
};

struct RegionLengths {
    std::size_t infer = 0;
    std::size_t neg = 0;
    std::size_t pos = 0;

    bool operator==(const RegionLengths&) const = default;
};

struct AssembledSequence {
    std::string instance_id;
    std::string neg_demo_id;
    std::string pos_demo_id;
    std::vector<TokenId> token_ids;
    LayoutOffsets offsets;
    RegionLengths real_lengths;
    std::optional<Label> label;

    // The neg region always holds a hateful demonstration, pos a non-hateful one.
    static constexpr Label neg_demo_label = Label::Hateful;
    static constexpr Label pos_demo_label = Label::NonHateful;
};

/// Region content: text, then caption, then knowledge strings, joined by "."
/// tokens. Empty parts are skipped.
std::vector<std::string> region_tokens(const MemeRecord& record);

/// Throws DataError when the demonstrations' labels are the wrong way round
/// and ConfigError when the prompt template does not fill len_prompt.
AssembledSequence assemble(const MemeRecord& instance, const MemeRecord& demo_neg, const MemeRecord& demo_pos,
                           const RegionLayout& layout, const Vocabulary& vocab);

/// Token strings of ids[span].
std::vector<std::string> detokenize(const Vocabulary& vocab, const std::vector<TokenId>& ids, Span span);

/// One-line dump with a stable field order.
std::string dump(const AssembledSequence& seq);

}  // namespace pen
