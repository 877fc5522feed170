#include "pen/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "pen/random.hpp"

namespace pen {

namespace {

double ratio(std::size_t num, std::size_t den)
{
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn)
{
    ClassMetrics m;
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    const double den = m.precision + m.recall;
    m.f1 = den == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / den;
    return m;
}

nlohmann::ordered_json class_json(const ClassMetrics& m)
{
    nlohmann::ordered_json j;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    return j;
}

std::string format_real(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

MetricsReport MetricsReport::from_confusion(const Confusion& c)
{
    if (c.total() == 0) {
        throw DataError("metrics: empty confusion table");
    }
    MetricsReport r;
    r.confusion = c;
    r.accuracy = ratio(c.tp + c.tn, c.total());
    r.hateful = class_metrics(c.tp, c.fp, c.fn);
    r.non_hateful = class_metrics(c.tn, c.fn, c.fp);
    r.macro_f1 = (r.hateful.f1 + r.non_hateful.f1) / 2.0;
    return r;
}

nlohmann::ordered_json MetricsReport::to_json() const
{
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["macro_f1"] = macro_f1;
    j["per_class"]["hateful"] = class_json(hateful);
    j["per_class"]["non_hateful"] = class_json(non_hateful);
    j["confusion"]["tp"] = confusion.tp;
    j["confusion"]["fp"] = confusion.fp;
    j["confusion"]["fn"] = confusion.fn;
    j["confusion"]["tn"] = confusion.tn;
    return j;
}

Confusion confusion_of(std::span<const Label> gold, std::span<const Label> predicted)
{
    if (gold.size() != predicted.size()) {
        throw ShapeError("confusion: " + std::to_string(gold.size()) + " gold labels vs " +
                         std::to_string(predicted.size()) + " predictions");
    }
    Confusion c;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool g = gold[i] == Label::Hateful;
        const bool p = predicted[i] == Label::Hateful;
        if (g && p) {
            ++c.tp;
        } else if (!g && p) {
            ++c.fp;
        } else if (g) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

template <typename T>
Predictions predict_corpus(const PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& records,
                           const DemonstrationPool& pool, std::uint64_t seed, std::size_t batch_size)
{
    if (batch_size == 0) {
        throw ConfigError("predict: batch size must be positive");
    }
    auto rng = make_rng(seed, Stream::EvalDemos);
    std::vector<AssembledSequence> seqs;
    seqs.reserve(records.size());
    for (const auto& r : records) {
        const DemoPair demos = sample_demonstrations(pool, rng, r.id);
        seqs.push_back(assemble(r, *demos.hateful, *demos.non_hateful, model.spec().layout, vocab));
    }

    Predictions p;
    p.dim = model.encoder().dim();
    for (std::size_t begin = 0; begin < seqs.size(); begin += batch_size) {
        const std::size_t end = std::min(seqs.size(), begin + batch_size);
        Graph<T> g;
        const auto out = model.forward(g, std::span<const AssembledSequence>(seqs).subspan(begin, end - begin));
        const Tensor<T>& masks = out.head.special_infer.value();
        const Tensor<T>& scores = out.head.scores.all.value();
        const std::vector<Label> labels = predict(scores);
        for (std::size_t i = begin; i < end; ++i) {
            p.ids.push_back(records[i].id);
            p.gold.push_back(records[i].label);
            p.predicted.push_back(labels[i - begin]);
        }
        p.masks.insert(p.masks.end(), masks.data.begin(), masks.data.end());
        p.scores.insert(p.scores.end(), scores.data.begin(), scores.data.end());
    }
    return p;
}

MetricsReport metrics_of(const Predictions& p)
{
    if (p.size() == 0) {
        throw DataError("evaluate: empty test corpus");
    }
    return MetricsReport::from_confusion(confusion_of(p.gold, p.predicted));
}

template <typename T>
MetricsReport evaluate(const PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& test,
                       const DemonstrationPool& pool, std::uint64_t seed, std::size_t batch_size)
{
    if (test.empty()) {
        throw DataError("evaluate: empty test corpus");
    }
    return metrics_of(predict_corpus(model, vocab, test, pool, seed, batch_size));
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report)
{
    std::ofstream out(path, std::ios::binary);
    out << report.to_json().dump(2) << '\n';
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

void write_features(std::ostream& out, const Predictions& p)
{
    out << "id\tlabel";
    for (std::size_t k = 0; k < p.dim; ++k) {
        out << "\tmask_" << k;
    }
    out << "\tscore_hateful\tscore_non_hateful\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
        out << p.ids[i] << '\t' << label_name(p.gold[i]);
        for (std::size_t k = 0; k < p.dim; ++k) {
            out << '\t' << format_real(p.masks[i * p.dim + k]);
        }
        out << '\t' << format_real(p.scores[2 * i]) << '\t' << format_real(p.scores[2 * i + 1]) << '\n';
    }
}

void write_features(const std::filesystem::path& path, const Predictions& p)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    write_features(out, p);
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

template <typename T>
void export_features(const PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& records,
                     const DemonstrationPool& pool, std::uint64_t seed, const std::filesystem::path& path)
{
    Predictions p;
    if (records.empty()) {
        p.dim = model.encoder().dim();
    } else {
        p = predict_corpus(model, vocab, records, pool, seed);
    }
    write_features(path, p);
}

double class_cosine_gap(const Predictions& p)
{
    const std::size_t n = p.size();
    const std::size_t d = p.dim;
    std::vector<double> norm(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            s += p.masks[i * d + k] * p.masks[i * d + k];
        }
        norm[i] = std::sqrt(s);
    }
    double intra = 0.0;
    double inter = 0.0;
    std::size_t n_intra = 0;
    std::size_t n_inter = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                dot += p.masks[i * d + k] * p.masks[j * d + k];
            }
            const double cos = dot / std::max(norm[i] * norm[j], kCosineEps);
            if (p.gold[i] == p.gold[j]) {
                intra += cos;
                ++n_intra;
            } else {
                inter += cos;
                ++n_inter;
            }
        }
    }
    if (n_intra == 0 || n_inter == 0) {
        throw DataError("cosine gap: needs at least one pair within and one across classes");
    }
    return intra / static_cast<double>(n_intra) - inter / static_cast<double>(n_inter);
}

MultiSeedReport multi_seed_evaluate(const std::function<MetricsReport(std::uint64_t)>& run,
                                    std::span<const std::uint64_t> seeds)
{
    if (seeds.empty()) {
        throw ConfigError("multi-seed evaluation needs at least one seed");
    }
    MultiSeedReport r;
    for (const auto seed : seeds) {
        r.runs.push_back({seed, run(seed)});
        r.mean_accuracy += r.runs.back().metrics.accuracy;
        r.mean_macro_f1 += r.runs.back().metrics.macro_f1;
    }
    r.mean_accuracy /= static_cast<double>(seeds.size());
    r.mean_macro_f1 /= static_cast<double>(seeds.size());
    return r;
}

void write_multi_seed_csv(std::ostream& out, const MultiSeedReport& report)
{
    out << "seed,accuracy,macro_f1\n";
    for (const auto& run : report.runs) {
        out << run.seed << ',' << format_real(run.metrics.accuracy) << ',' << format_real(run.metrics.macro_f1)
            << '\n';
    }
    out << "mean," << format_real(report.mean_accuracy) << ',' << format_real(report.mean_macro_f1) << '\n';
}

#define PEN_INSTANTIATE(T)                                                                                      \
    template Predictions predict_corpus(const PenModel<T>&, const Vocabulary&, const std::vector<MemeRecord>&, \
                                        const DemonstrationPool&, std::uint64_t, std::size_t);                 \
    template MetricsReport evaluate(const PenModel<T>&, const Vocabulary&, const std::vector<MemeRecord>&,     \
                                    const DemonstrationPool&, std::uint64_t, std::size_t);                     \
    template void export_features(const PenModel<T>&, const Vocabulary&, const std::vector<MemeRecord>&,       \
                                  const DemonstrationPool&, std::uint64_t, const std::filesystem::path&);

PEN_INSTANTIATE(float)
PEN_INSTANTIATE(double)

#undef PEN_INSTANTIATE

}  // namespace pen
