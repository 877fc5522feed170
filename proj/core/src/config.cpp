#include "pen/config.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <set>

#include "pen/error.hpp"

namespace pen {

using nlohmann::json;

namespace {

// Reads the keys of one object, rejecting anything not consumed.
class Section {
public:
    Section(const json& doc, std::string path) : path_(std::move(path))
    {
        if (!doc.is_object()) {
            throw ConfigError(label() + " must be an object");
        }
        doc_ = &doc;
    }

    ~Section() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0) {
            return;
        }
        for (const auto& [key, value] : doc_->items()) {
            if (seen_.count(key) == 0) {
                throw ConfigError("unknown key " + (path_.empty() ? key : path_ + "." + key));
            }
        }
    }

    const json* get(const std::string& key)
    {
        seen_.insert(key);
        auto it = doc_->find(key);
        return it == doc_->end() ? nullptr : &*it;
    }

    template <typename V>
    void read(const std::string& key, V& out)
    {
        const json* v = get(key);
        if (v == nullptr) {
            return;
        }
        try {
            if constexpr (std::is_same_v<V, bool>) {
                if (!v->is_boolean()) {
                    throw ConfigError("");
                }
            } else if constexpr (std::is_unsigned_v<V>) {
                if (!v->is_number_unsigned()) {
                    throw ConfigError("");
                }
            } else if constexpr (std::is_floating_point_v<V>) {
                if (!v->is_number()) {
                    throw ConfigError("");
                }
            } else if constexpr (std::is_same_v<V, std::string>) {
                if (!v->is_string()) {
                    throw ConfigError("");
                }
            }
            out = v->get<V>();
        } catch (const std::exception&) {
            throw ConfigError(key_name(key) + ": unexpected value " + v->dump());
        }
    }

    Section child(const std::string& key)
    {
        const json* v = get(key);
        static const json empty = json::object();
        return Section(v == nullptr ? empty : *v, key_name(key));
    }

    std::string key_name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string label() const { return path_.empty() ? "config" : path_; }

    const json* doc_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<std::string> string_list(Section& s, const std::string& key, std::vector<std::string> fallback)
{
    s.read(key, fallback);
    return fallback;
}

void parse_corpus(Section s, CorpusConfig& c)
{
    s.read("train_path", c.train_path);
    s.read("test_path", c.test_path);
    s.read("demo_pool_limit", c.demo_pool_limit);
    {
        Section sch = s.child("schema");
        sch.read("id_field", c.schema.id_field);
        sch.read("text_field", c.schema.text_field);
        sch.read("caption_field", c.schema.caption_field);
        sch.read("knowledge_field", c.schema.knowledge_field);
        sch.read("label_field", c.schema.label_field);
        c.schema.hateful_values = string_list(sch, "hateful_values", c.schema.hateful_values);
        c.schema.non_hateful_values = string_list(sch, "non_hateful_values", c.schema.non_hateful_values);
    }
    if (s.get("synthetic") != nullptr) {
        SyntheticSpec syn;
        Section sy = s.child("synthetic");
        sy.read("n_train", syn.n_train);
        sy.read("n_test", syn.n_test);
        sy.read("vocab_size", syn.vocab_size);
        sy.read("signal_token", syn.signal_token);
        sy.read("noise_rate", syn.noise_rate);
        sy.read("seed", syn.seed);
        sy.read("hate_fraction", syn.hate_fraction);
        sy.read("signal_demos", syn.signal_demos);
        c.synthetic = syn;
    }
}

void parse_layout(Section s, RegionLayout& l, PromptConfig& p)
{
    s.read("len_infer", l.len_infer);
    s.read("len_demo", l.len_demo);
    s.read("len_prompt", l.len_prompt);
    s.read("hateful_first", l.hateful_first);
    p.template_words = string_list(s, "template", p.template_words);
    s.read("hateful_word", p.hateful_word);
    s.read("non_hateful_word", p.non_hateful_word);
}

void parse_encoder(Section s, EncoderConfig& e)
{
    std::string kind = e.kind == EncoderKind::Tiny ? "tiny" : "file";
    s.read("kind", kind);
    if (kind == "tiny") {
        e.kind = EncoderKind::Tiny;
    } else if (kind == "file") {
        e.kind = EncoderKind::File;
    } else {
        throw ConfigError("encoder.kind: expected \"tiny\" or \"file\", got \"" + kind + "\"");
    }
    s.read("dim", e.dim);
    s.read("mixing", e.mixing);
    s.read("min_freq", e.min_freq);
    s.read("archive", e.archive);
}

void parse_loss(Section s, LossConfig& l)
{
    s.read("alpha", l.alpha);
    s.read("beta", l.beta);
    s.read("tau1", l.tau1);
    s.read("tau2", l.tau2);
    s.read("l2_stop_grad", l.l2_stop_grad);
    std::string form = l.form == ContrastiveForm::InfoNce ? "infonce" : "literal_ratio";
    s.read("formulation", form);
    if (form == "infonce") {
        l.form = ContrastiveForm::InfoNce;
    } else if (form == "literal_ratio") {
        l.form = ContrastiveForm::LiteralRatio;
    } else {
        throw ConfigError("loss.formulation: expected \"infonce\" or \"literal_ratio\", got \"" + form + "\"");
    }
}

void parse_trainer(Section s, TrainConfig& t)
{
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    if (s.get("learning_rate") != nullptr) {
        double lr = 0.0;
        s.read("learning_rate", lr);
        t.learning_rate = lr;
    }
    s.read("seed", t.seed);
    if (s.get("views") != nullptr) {
        t.views = ViewSet::parse(string_list(s, "views", {}));
    }
    s.read("pmp_enabled", t.pmp_enabled);
    std::string policy = t.demo_policy == DemoPolicy::PerEpochResample ? "per_epoch" : "fixed";
    s.read("demo_policy", policy);
    if (policy == "per_epoch") {
        t.demo_policy = DemoPolicy::PerEpochResample;
    } else if (policy == "fixed") {
        t.demo_policy = DemoPolicy::FixedPerSample;
    } else {
        throw ConfigError("trainer.demo_policy: expected \"per_epoch\" or \"fixed\", got \"" + policy + "\"");
    }
    s.read("beta_m", t.beta_m);
    s.read("beta_v", t.beta_v);
    s.read("epsilon", t.epsilon);
    unsigned bits = t.precision == Precision::F32 ? 32 : 64;
    s.read("precision", bits);
    if (bits == 32) {
        t.precision = Precision::F32;
    } else if (bits == 64) {
        t.precision = Precision::F64;
    } else {
        throw ConfigError("trainer.precision: expected 32 or 64, got " + std::to_string(bits));
    }
    s.read("tie_region_lstm", t.tie_region_lstm);
    s.read("shared_lmhead", t.shared_lmhead);
    s.read("class_weighting", t.class_weighting);
}

void parse_eval(Section s, EvalConfig& e)
{
    if (s.get("seed") != nullptr) {
        std::uint64_t seed = 0;
        s.read("seed", seed);
        e.seed = seed;
    }
    s.read("seeds", e.seeds);
    e.ablation = string_list(s, "ablation", e.ablation);
}

}  // namespace

void TrainConfig::validate() const
{
    if (epochs < 1) {
        throw ConfigError("trainer.epochs must be at least 1");
    }
    if (batch_size < 2) {
        throw ConfigError("trainer.batch_size must be at least 2");
    }
    if (learning_rate && !(*learning_rate > 0.0 && std::isfinite(*learning_rate))) {
        throw ConfigError("trainer.learning_rate must be finite and positive");
    }
    if (!(beta_m >= 0.0 && beta_m < 1.0) || !(beta_v >= 0.0 && beta_v < 1.0)) {
        throw ConfigError("trainer.beta_m and trainer.beta_v must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("trainer.epsilon must be positive");
    }
}

HeadOptions RunConfig::head() const
{
    HeadOptions h;
    h.views = trainer.views;
    h.pmp_enabled = trainer.pmp_enabled;
    h.tie_region_lstm = trainer.tie_region_lstm;
    h.shared_lmhead = trainer.shared_lmhead;
    return h;
}

void RunConfig::validate() const
{
    pen::validate(layout);
    if (prompt.template_words.size() + 1 != layout.len_prompt) {
        throw ConfigError("layout.template has " + std::to_string(prompt.template_words.size()) +
                          " words; len_prompt needs " + std::to_string(layout.len_prompt - 1));
    }
    if (prompt.hateful_word == prompt.non_hateful_word) {
        throw ConfigError("layout.hateful_word and layout.non_hateful_word must differ");
    }
    if (encoder.kind == EncoderKind::Tiny && encoder.dim == 0) {
        throw ConfigError("encoder.dim must be positive");
    }
    if (encoder.kind == EncoderKind::File && encoder.archive.empty()) {
        throw ConfigError("encoder.archive is required when encoder.kind is \"file\"");
    }
    if (encoder.min_freq == 0) {
        throw ConfigError("encoder.min_freq must be at least 1");
    }
    loss.validate();
    trainer.validate();
    head().validate();
}

RunConfig parse_config(const json& doc)
{
    RunConfig cfg;
    {
        Section root(doc, "");
        parse_corpus(root.child("corpus"), cfg.corpus);
        parse_layout(root.child("layout"), cfg.layout, cfg.prompt);
        parse_encoder(root.child("encoder"), cfg.encoder);
        parse_loss(root.child("loss"), cfg.loss);
        parse_trainer(root.child("trainer"), cfg.trainer);
        parse_eval(root.child("eval"), cfg.eval);
    }
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg)
{
    nlohmann::ordered_json j;
    auto& c = j["corpus"];
    c["train_path"] = cfg.corpus.train_path;
    c["test_path"] = cfg.corpus.test_path;
    c["demo_pool_limit"] = cfg.corpus.demo_pool_limit;
    auto& sch = c["schema"];
    sch["id_field"] = cfg.corpus.schema.id_field;
    sch["text_field"] = cfg.corpus.schema.text_field;
    sch["caption_field"] = cfg.corpus.schema.caption_field;
    sch["knowledge_field"] = cfg.corpus.schema.knowledge_field;
    sch["label_field"] = cfg.corpus.schema.label_field;
    sch["hateful_values"] = cfg.corpus.schema.hateful_values;
    sch["non_hateful_values"] = cfg.corpus.schema.non_hateful_values;
    if (cfg.corpus.synthetic) {
        const auto& s = *cfg.corpus.synthetic;
        auto& sy = c["synthetic"];
        sy["n_train"] = s.n_train;
        sy["n_test"] = s.n_test;
        sy["vocab_size"] = s.vocab_size;
        sy["signal_token"] = s.signal_token;
        sy["noise_rate"] = s.noise_rate;
        sy["seed"] = s.seed;
        sy["hate_fraction"] = s.hate_fraction;
        sy["signal_demos"] = s.signal_demos;
    }
    auto& l = j["layout"];
    l["len_infer"] = cfg.layout.len_infer;
    l["len_demo"] = cfg.layout.len_demo;
    l["len_prompt"] = cfg.layout.len_prompt;
    l["hateful_first"] = cfg.layout.hateful_first;
    l["template"] = cfg.prompt.template_words;
    l["hateful_word"] = cfg.prompt.hateful_word;
    l["non_hateful_word"] = cfg.prompt.non_hateful_word;
    auto& e = j["encoder"];
    e["kind"] = cfg.encoder.kind == EncoderKind::Tiny ? "tiny" : "file";
    e["dim"] = cfg.encoder.dim;
    e["mixing"] = cfg.encoder.mixing;
    e["min_freq"] = cfg.encoder.min_freq;
    e["archive"] = cfg.encoder.archive;
    auto& lo = j["loss"];
    lo["alpha"] = cfg.loss.alpha;
    lo["beta"] = cfg.loss.beta;
    lo["tau1"] = cfg.loss.tau1;
    lo["tau2"] = cfg.loss.tau2;
    lo["formulation"] = cfg.loss.form == ContrastiveForm::InfoNce ? "infonce" : "literal_ratio";
    lo["l2_stop_grad"] = cfg.loss.l2_stop_grad;
    auto& t = j["trainer"];
    t["epochs"] = cfg.trainer.epochs;
    t["batch_size"] = cfg.trainer.batch_size;
    t["learning_rate"] = cfg.trainer.resolved_learning_rate(cfg.encoder.kind);
    t["seed"] = cfg.trainer.seed;
    t["views"] = cfg.trainer.views.names();
    t["pmp_enabled"] = cfg.trainer.pmp_enabled;
    t["demo_policy"] = cfg.trainer.demo_policy == DemoPolicy::PerEpochResample ? "per_epoch" : "fixed";
    t["beta_m"] = cfg.trainer.beta_m;
    t["beta_v"] = cfg.trainer.beta_v;
    t["epsilon"] = cfg.trainer.epsilon;
    t["precision"] = cfg.trainer.precision == Precision::F32 ? 32 : 64;
    t["tie_region_lstm"] = cfg.trainer.tie_region_lstm;
    t["shared_lmhead"] = cfg.trainer.shared_lmhead;
    t["class_weighting"] = cfg.trainer.class_weighting;
    auto& ev = j["eval"];
    ev["seed"] = cfg.eval_seed();
    ev["seeds"] = cfg.eval.seeds;
    ev["ablation"] = cfg.eval.ablation;
    return j;
}

void apply_override(json& doc, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override \"" + std::string(assignment) + "\" is not key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json* node = &doc;
    std::size_t begin = 0;
    for (;;) {
        const auto dot = key.find('.', begin);
        const std::string part = key.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
        if (part.empty()) {
            throw ConfigError("override key \"" + key + "\" has an empty component");
        }
        if (!node->is_object()) {
            if (!node->is_null()) {
                throw ConfigError("override key \"" + key + "\" descends into a non-object");
            }
            *node = json::object();
        }
        node = &(*node)[part];
        if (dot == std::string::npos) {
            break;
        }
        begin = dot + 1;
    }
    *node = std::move(value);
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("config " + path.string() + " is not valid JSON");
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    RunConfig cfg = parse_config(doc);
    // Relative data paths are taken from the config file's directory.
    const auto base = path.parent_path();
    for (std::string* p : {&cfg.corpus.train_path, &cfg.corpus.test_path, &cfg.encoder.archive}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) {
            *p = (base / *p).lexically_normal().string();
        }
    }
    return cfg;
}

}  // namespace pen
