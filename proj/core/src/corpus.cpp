#include "pen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pen/error.hpp"

namespace pen {

namespace {

using json = nlohmann::json;

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s)
{
    const auto* b = s.begin();
    const auto* e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) {
        ++b;
    }
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) {
        --e;
    }
    return std::string(b, e);
}

std::string scalar_text(const json& v)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer() || v.is_number_unsigned() || v.is_boolean()) {
        return v.dump();
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == std::floor(d)) {
            return std::to_string(static_cast<long long>(d));
        }
        return v.dump();
    }
    return v.dump();
}

bool matches_any(const std::string& value, const std::vector<std::string>& candidates)
{
    const std::string lv = lower(trim(value));
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](const std::string& c) { return lower(c) == lv; });
}

json label_json(const std::string& raw)
{
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(raw, &pos);
        if (pos == raw.size()) {
            return n;
        }
    } catch (const std::exception&) {
    }
    return raw;
}

}  // namespace

std::string_view label_name(Label l)
{
    return l == Label::Hateful ? "hateful" : "non_hateful";
}

SplitStats& SplitStats::operator+=(const SplitStats& o)
{
    train_hate += o.train_hate;
    train_nonhate += o.train_nonhate;
    test_hate += o.test_hate;
    test_nonhate += o.test_nonhate;
    return *this;
}

SplitStats tally(const std::vector<MemeRecord>& records, Split split)
{
    SplitStats s;
    for (const auto& r : records) {
        const bool hate = r.label == Label::Hateful;
        if (split == Split::Train) {
            (hate ? s.train_hate : s.train_nonhate)++;
        } else {
            (hate ? s.test_hate : s.test_nonhate)++;
        }
    }
    return s;
}

LoadedCorpus load_corpus(const std::filesystem::path& path, const CorpusSchema& schema, Split split)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open corpus file: " + path.string());
    }
    LoadedCorpus out;
    const std::string where = path.filename().string();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const std::string at = where + ":" + std::to_string(line_no) + ": ";
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(at + "malformed record: " + e.what());
        }
        if (!obj.is_object()) {
            throw DataError(at + "record is not an object");
        }
        MemeRecord rec;
        if (auto it = obj.find(schema.id_field); it != obj.end() && !it->is_null()) {
            rec.id = scalar_text(*it);
        } else {
            rec.id = path.filename().string() + ":" + std::to_string(line_no);
        }
        auto text = obj.find(schema.text_field);
        if (text == obj.end() || !text->is_string()) {
            throw DataError(at + "missing text field '" + schema.text_field + "'");
        }
        rec.text = text->get<std::string>();
        if (trim(rec.text).empty()) {
            throw DataError(at + "text is empty");
        }
        if (auto it = obj.find(schema.caption_field); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) {
                throw DataError(at + "caption must be a string");
            }
            rec.caption = it->get<std::string>();
        }
        if (auto it = obj.find(schema.knowledge_field); it != obj.end() && !it->is_null()) {
            if (it->is_string()) {
                rec.knowledge.push_back(it->get<std::string>());
            } else if (it->is_array()) {
                for (const auto& k : *it) {
                    if (!k.is_string()) {
                        throw DataError(at + "knowledge entries must be strings");
                    }
                    rec.knowledge.push_back(k.get<std::string>());
                }
            } else {
                throw DataError(at + "knowledge must be an array of strings");
            }
        }
        auto label = obj.find(schema.label_field);
        if (label == obj.end() || label->is_null()) {
            throw DataError(at + "missing label field '" + schema.label_field + "'");
        }
        const std::string raw = scalar_text(*label);
        if (matches_any(raw, schema.hateful_values)) {
            rec.label = Label::Hateful;
        } else if (matches_any(raw, schema.non_hateful_values)) {
            rec.label = Label::NonHateful;
        } else {
            throw DataError(at + "unrecognised label value '" + raw + "'");
        }
        out.records.push_back(std::move(rec));
    }
    out.stats = tally(out.records, split);
    return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<MemeRecord>& records,
                  const CorpusSchema& schema)
{
    if (schema.hateful_values.empty() || schema.non_hateful_values.empty()) {
        throw ConfigError("corpus schema needs at least one label value per class");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot open corpus file for writing: " + path.string());
    }
    for (const auto& r : records) {
        nlohmann::ordered_json obj;
        obj[schema.id_field] = r.id;
        obj[schema.text_field] = r.text;
        obj[schema.caption_field] = r.caption;
        obj[schema.knowledge_field] = r.knowledge;
        obj[schema.label_field] = label_json(r.label == Label::Hateful ? schema.hateful_values.front()
                                                                        : schema.non_hateful_values.front());
        out << obj.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

DemonstrationPool DemonstrationPool::from_training(const std::vector<MemeRecord>& train, std::size_t limit,
                                                   std::uint64_t seed)
{
    DemonstrationPool pool;
    for (const auto& r : train) {
        (r.label == Label::Hateful ? pool.hateful : pool.non_hateful).push_back(r);
    }
    if (limit > 0) {
        std::mt19937_64 rng(seed);
        for (auto* list : {&pool.hateful, &pool.non_hateful}) {
            if (list->size() > limit) {
                std::shuffle(list->begin(), list->end(), rng);
                list->resize(limit);
            }
        }
    }
    return pool;
}

namespace {

const MemeRecord& draw(const std::vector<MemeRecord>& list, std::mt19937_64& rng,
                       std::optional<std::string_view> exclude, const char* which)
{
    if (list.empty()) {
        throw DataError(std::string("demonstration pool has no ") + which + " records");
    }
    if (exclude && list.size() == 1 && list.front().id == *exclude) {
        throw DataError(std::string("demonstration pool has no ") + which + " record other than " +
                        std::string(*exclude));
    }
    std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
    for (;;) {
        const MemeRecord& r = list[pick(rng)];
        if (!exclude || r.id != *exclude) {
            return r;
        }
    }
}

}  // namespace

DemoPair sample_demonstrations(const DemonstrationPool& pool, std::mt19937_64& rng,
                               std::optional<std::string_view> exclude_id)
{
    DemoPair pair;
    pair.hateful = &draw(pool.hateful, rng, exclude_id, "hateful");
    pair.non_hateful = &draw(pool.non_hateful, rng, exclude_id, "non-hateful");
    return pair;
}

namespace {

std::vector<MemeRecord> synth_split(const SyntheticSpec& spec, std::size_t n, const std::string& prefix,
                                    std::mt19937_64& rng, std::vector<MemeRecord>* clean = nullptr)
{
    const auto n_hate = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.hate_fraction));
    std::vector<Label> labels(n, Label::NonHateful);
    std::fill_n(labels.begin(), n_hate, Label::Hateful);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::uniform_int_distribution<std::size_t> word(0, spec.vocab_size - 1);
    std::uniform_int_distribution<std::size_t> text_len(5, 10);
    std::uniform_int_distribution<std::size_t> caption_len(3, 6);
    std::bernoulli_distribution flip(spec.noise_rate);

    auto filler = [&](std::size_t len) {
        std::vector<std::string> words;
        for (std::size_t i = 0; i < len; ++i) {
            words.push_back("w" + std::to_string(word(rng)));
        }
        return words;
    };
    auto join = [](const std::vector<std::string>& words) {
        std::string s;
        for (const auto& w : words) {
            if (!s.empty()) {
                s += ' ';
            }
            s += w;
        }
        return s;
    };

    std::vector<MemeRecord> out;
    out.reserve(n);
    const std::size_t width = std::to_string(n).size();
    for (std::size_t i = 0; i < n; ++i) {
        MemeRecord r;
        std::string num = std::to_string(i);
        r.id = prefix + "-" + std::string(width - num.size(), '0') + num;
        r.label = labels[i];
        auto words = filler(text_len(rng));
        const bool noisy = flip(rng);
        const bool has_signal = (r.label == Label::Hateful) != noisy;
        if (has_signal) {
            std::uniform_int_distribution<std::size_t> at(0, words.size());
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(at(rng)), spec.signal_token);
        }
        r.text = join(words);
        r.caption = join(filler(caption_len(rng)));
        if (clean != nullptr && !noisy) {
            clean->push_back(r);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.vocab_size < 8) {
        throw ConfigError("synthetic: vocab_size must be at least 8");
    }
    if (!(spec.noise_rate >= 0.0 && spec.noise_rate < 0.5)) {
        throw ConfigError("synthetic: noise_rate must lie in [0, 0.5)");
    }
    if (!(spec.hate_fraction > 0.0 && spec.hate_fraction < 1.0)) {
        throw ConfigError("synthetic: hate_fraction must lie in (0, 1)");
    }
    if (spec.n_train < 2) {
        throw ConfigError("synthetic: n_train must be at least 2");
    }
    const auto& tok = spec.signal_token;
    const bool alnum = !tok.empty() && std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
        return std::isalnum(c) != 0;
    });
    if (!alnum || lower(tok) != tok) {
        throw ConfigError("synthetic: signal_token must be a lowercase alphanumeric word");
    }
    if (tok[0] == 'w' && tok.size() > 1 &&
        std::all_of(tok.begin() + 1, tok.end(), [](unsigned char c) { return std::isdigit(c) != 0; })) {
        throw ConfigError("synthetic: signal_token collides with filler vocabulary");
    }
    std::mt19937_64 rng(spec.seed);
    SyntheticCorpus out;
    out.train = synth_split(spec, spec.n_train, "train", rng, spec.signal_demos ? &out.demos : nullptr);
    out.test = synth_split(spec, spec.n_test, "test", rng);
    return out;
}

}  // namespace pen
