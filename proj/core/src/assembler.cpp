#include "pen/assembler.hpp"

#include <cctype>
#include <sstream>

#include "pen/error.hpp"

namespace pen {

void validate(const RegionLayout& layout)
{
    if (layout.len_infer == 0 || layout.len_demo == 0 || layout.len_prompt == 0) {
        throw ConfigError("layout: region and prompt lengths must be positive");
    }
    if (layout.len_infer <= layout.len_demo) {
        throw ConfigError("layout: len_infer (" + std::to_string(layout.len_infer) +
                          ") must exceed len_demo (" + std::to_string(layout.len_demo) + ")");
    }
}

LayoutOffsets layout_offsets(const RegionLayout& layout)
{
    validate(layout);
    LayoutOffsets o;
    std::size_t at = 0;
    o.start = at++;
    o.infer = {at, at + layout.len_infer};
    at = o.infer.end;
    o.infer_prompt = {at, at + layout.len_prompt};
    at = o.infer_prompt.end;
    o.sep_infer = at++;

    Span first{at, at + layout.len_demo};
    at = first.end;
    Span first_prompt{at, at + layout.len_prompt};
    at = first_prompt.end;
    const std::size_t first_sep = at++;
    Span second{at, at + layout.len_demo};
    at = second.end;
    Span second_prompt{at, at + layout.len_prompt};
    at = second_prompt.end;
    const std::size_t second_sep = at++;
    o.total = at;

    if (layout.hateful_first) {
        o.neg = first;
        o.neg_prompt = first_prompt;
        o.sep_neg = first_sep;
        o.pos = second;
        o.pos_prompt = second_prompt;
        o.sep_pos = second_sep;
    } else {
        o.pos = first;
        o.pos_prompt = first_prompt;
        o.sep_pos = first_sep;
        o.neg = second;
        o.neg_prompt = second_prompt;
        o.sep_neg = second_sep;
    }
    o.mask = o.infer_prompt.end - 1;
    o.neg_label = o.neg_prompt.end - 1;
    o.pos_label = o.pos_prompt.end - 1;
    return o;
}

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::vector<std::string> region_tokens(const MemeRecord& record)
{
    std::vector<std::string> out = tokenize(record.text);
    auto append = [&](std::string_view part) {
        auto toks = tokenize(part);
        if (toks.empty()) {
            return;
        }
        if (!out.empty()) {
            out.emplace_back(".");
        }
        out.insert(out.end(), std::make_move_iterator(toks.begin()), std::make_move_iterator(toks.end()));
    };
    append(record.caption);
    for (const auto& k : record.knowledge) {
        append(k);
    }
    return out;
}

TokenId Vocabulary::intern(const std::string& token)
{
    if (auto it = index_.find(token); it != index_.end()) {
        return it->second;
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
}

Vocabulary Vocabulary::build(const std::vector<MemeRecord>& corpus, std::size_t min_freq, const PromptConfig& prompt)
{
    Vocabulary v;
    for (const char* special : {"[pad]", "[unk]", "[start]", "[sep]", "[mask]"}) {
        v.intern(special);
    }
    auto word_id = [&](const std::string& w, const char* what) {
        auto toks = tokenize(w);
        if (toks.size() != 1) {
            throw ConfigError(std::string("prompt ") + what + " '" + w + "' must be a single token");
        }
        if (v.index_.count(toks[0]) > 0) {
            throw ConfigError(std::string("prompt ") + what + " '" + w + "' collides with a reserved token");
        }
        return v.intern(toks[0]);
    };
    v.neg_label_ = word_id(prompt.hateful_word, "hateful label word");
    v.pos_label_ = word_id(prompt.non_hateful_word, "non-hateful label word");
    for (const auto& w : prompt.template_words) {
        auto toks = tokenize(w);
        if (toks.size() != 1) {
            throw ConfigError("prompt template word '" + w + "' must be a single token");
        }
        const TokenId id = v.intern(toks[0]);
        if (id == v.neg_label_ || id == v.pos_label_) {
            throw ConfigError("prompt template word '" + w + "' collides with a label word");
        }
        v.template_.push_back(id);
    }
    v.dot_ = v.intern(".");

    std::unordered_map<std::string, std::size_t> freq;
    std::vector<std::string> order;
    for (const auto& r : corpus) {
        for (auto& t : region_tokens(r)) {
            if (freq[t]++ == 0) {
                order.push_back(t);
            }
        }
    }
    for (const auto& t : order) {
        if (freq[t] >= min_freq) {
            v.intern(t);
        }
    }
    return v;
}

TokenId Vocabulary::id(std::string_view token) const
{
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const
{
    return index_.count(std::string(token)) > 0;
}

namespace {

std::size_t fill_region(std::vector<TokenId>& ids, Span span, const MemeRecord& record, const Vocabulary& vocab)
{
    const auto toks = region_tokens(record);
    const std::size_t keep = std::min(toks.size(), span.size());
    for (std::size_t i = 0; i < keep; ++i) {
        ids[span.begin + i] = vocab.id(toks[i]);
    }
    return keep;
}

void fill_prompt(std::vector<TokenId>& ids, Span span, TokenId slot, const Vocabulary& vocab)
{
    const auto& words = vocab.template_ids();
    for (std::size_t i = 0; i < words.size(); ++i) {
        ids[span.begin + i] = words[i];
    }
    ids[span.end - 1] = slot;
}

}  // namespace

AssembledSequence assemble(const MemeRecord& instance, const MemeRecord& demo_neg, const MemeRecord& demo_pos,
                           const RegionLayout& layout, const Vocabulary& vocab)
{
    if (demo_neg.label != Label::Hateful || demo_pos.label != Label::NonHateful) {
        throw DataError("assemble: demonstrations must be (hateful, non-hateful), got (" +
                        std::string(label_name(demo_neg.label)) + ", " + std::string(label_name(demo_pos.label)) +
                        ")");
    }
    if (vocab.template_ids().size() + 1 != layout.len_prompt) {
        throw ConfigError("assemble: prompt template of " + std::to_string(vocab.template_ids().size()) +
                          " words plus label slot does not fill len_prompt " + std::to_string(layout.len_prompt));
    }
    AssembledSequence seq;
    seq.instance_id = instance.id;
    seq.neg_demo_id = demo_neg.id;
    seq.pos_demo_id = demo_pos.id;
    seq.label = instance.label;
    seq.offsets = layout_offsets(layout);
    const auto& o = seq.offsets;
    seq.token_ids.assign(o.total, Vocabulary::kPad);
    auto& ids = seq.token_ids;
    ids[o.start] = Vocabulary::kStart;
    ids[o.sep_infer] = Vocabulary::kSep;
    ids[o.sep_neg] = Vocabulary::kSep;
    ids[o.sep_pos] = Vocabulary::kSep;
    seq.real_lengths.infer = fill_region(ids, o.infer, instance, vocab);
    seq.real_lengths.neg = fill_region(ids, o.neg, demo_neg, vocab);
    seq.real_lengths.pos = fill_region(ids, o.pos, demo_pos, vocab);
    fill_prompt(ids, o.infer_prompt, Vocabulary::kMask, vocab);
    fill_prompt(ids, o.neg_prompt, vocab.neg_label_id(), vocab);
    fill_prompt(ids, o.pos_prompt, vocab.pos_label_id(), vocab);
    return seq;
}

std::vector<std::string> detokenize(const Vocabulary& vocab, const std::vector<TokenId>& ids, Span span)
{
    std::vector<std::string> out;
    for (std::size_t i = span.begin; i < span.end; ++i) {
        out.push_back(vocab.token(ids.at(i)));
    }
    return out;
}

std::string dump(const AssembledSequence& seq)
{
    std::ostringstream s;
    const auto& o = seq.offsets;
    auto span = [&](const char* name, Span sp) { s << " span." << name << '=' << sp.begin << ':' << sp.end; };
    s << "id=" << seq.instance_id << " demo_neg=" << seq.neg_demo_id << " demo_pos=" << seq.pos_demo_id
      << " label=" << (seq.label ? label_name(*seq.label) : std::string_view("none")) << " n=" << o.total;
    span("infer", o.infer);
    span("infer_prompt", o.infer_prompt);
    span("neg", o.neg);
    span("neg_prompt", o.neg_prompt);
    span("pos", o.pos);
    span("pos_prompt", o.pos_prompt);
    s << " real.infer=" << seq.real_lengths.infer << " real.neg=" << seq.real_lengths.neg
      << " real.pos=" << seq.real_lengths.pos;
    s << " special.mask=" << o.mask << " special.neg=" << o.neg_label << " special.pos=" << o.pos_label;
    s << " tokens=";
    for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
        if (i > 0) {
            s << ',';
        }
        s << seq.token_ids[i];
    }
    return s.str();
}

}  // namespace pen
