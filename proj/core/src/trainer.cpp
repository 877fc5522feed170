#include "pen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "pen/optim.hpp"
#include "pen/random.hpp"

namespace pen {

nlohmann::ordered_json EpochLog::to_json() const
{
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["ce"] = loss.ce;
    j["l1"] = loss.l1;
    j["l2"] = loss.l2;
    j["total"] = loss.total;
    j["train_acc"] = train_acc;
    return j;
}

template <typename T>
BatchLoss<T> batch_loss(const PenModel<T>& model, Graph<T>& g, std::span<const AssembledSequence> batch,
                        const LossConfig& loss, std::optional<std::array<double, 2>> class_weights)
{
    std::vector<Label> labels;
    labels.reserve(batch.size());
    for (const auto& s : batch) {
        if (!s.label) {
            throw DataError("training sequence " + s.instance_id + " has no label");
        }
        labels.push_back(*s.label);
    }
    auto out = model.forward(g, batch);
    const auto& h = out.head;
    const Var<T> ce = cross_entropy(h.scores.all, labels, class_weights);
    const Var<T> l1 = l1_category_contrastive(h.special_infer, labels, loss.tau1, loss.form);
    const Var<T> l2 =
        l2_prompt_contrastive(h.special_infer, h.special_neg, h.special_pos, labels, loss.tau2, loss.form,
                              loss.l2_stop_grad);
    return {std::move(out), total_loss(ce, l1, l2, loss)};
}

std::array<double, 2> inverse_frequency_weights(const std::vector<MemeRecord>& records)
{
    std::array<std::size_t, 2> n{};
    for (const auto& r : records) {
        ++n[label_index(r.label)];
    }
    if (n[0] == 0 || n[1] == 0) {
        throw ConfigError("class weighting needs both classes in the training split");
    }
    const auto total = static_cast<double>(records.size());
    return {total / (2.0 * static_cast<double>(n[0])), total / (2.0 * static_cast<double>(n[1]))};
}

namespace {

void check_finite(const LossReport& r, std::size_t epoch, std::size_t batch)
{
    const std::pair<const char*, double> terms[] = {{"ce", r.ce}, {"l1", r.l1}, {"l2", r.l2}, {"total", r.total}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite loss term ") + name + " (" + std::to_string(v) +
                               ") at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
        }
    }
}

std::vector<DemoPair> draw_demos(const std::vector<MemeRecord>& records, const DemonstrationPool& pool,
                                 std::mt19937_64& rng)
{
    std::vector<DemoPair> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(sample_demonstrations(pool, rng, r.id));
    }
    return out;
}

template <typename F>
decltype(auto) with_precision(Precision p, F&& f)
{
    if (p == Precision::F64) {
        return f.template operator()<double>();
    }
    return f.template operator()<float>();
}

}  // namespace

template <typename T>
std::vector<EpochLog> train(PenModel<T>& model, const Vocabulary& vocab, const std::vector<MemeRecord>& train_set,
                            const DemonstrationPool& pool, const RunConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch)
{
    cfg.trainer.validate();
    cfg.loss.validate();
    if (train_set.size() < 2) {
        throw DataError("training needs at least 2 records");
    }
    std::optional<std::array<double, 2>> weights;
    if (cfg.trainer.class_weighting) {
        weights = inverse_frequency_weights(train_set);
    }
    AdamConfig ac;
    ac.learning_rate = cfg.trainer.resolved_learning_rate(cfg.encoder.kind);
    ac.beta_m = cfg.trainer.beta_m;
    ac.beta_v = cfg.trainer.beta_v;
    ac.epsilon = cfg.trainer.epsilon;
    Adam<T> adam(model.parameters(), ac);

    auto shuffle_rng = make_rng(cfg.trainer.seed, Stream::Shuffle);
    auto demo_rng = make_rng(cfg.trainer.seed, Stream::TrainDemos);
    std::vector<DemoPair> demos;
    std::vector<std::size_t> order(train_set.size());
    std::vector<EpochLog> logs;

    for (std::size_t epoch = 1; epoch <= cfg.trainer.epochs; ++epoch) {
        if (demos.empty() || cfg.trainer.demo_policy == DemoPolicy::PerEpochResample) {
            demos = draw_demos(train_set, pool, demo_rng);
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochLog log;
        log.epoch = epoch;
        std::size_t seen = 0;
        std::size_t correct = 0;
        std::vector<AssembledSequence> batch;
        for (std::size_t begin = 0, index = 0; begin < order.size(); begin += cfg.trainer.batch_size, ++index) {
            const std::size_t end = std::min(order.size(), begin + cfg.trainer.batch_size);
            if (end - begin < 2) {
                break;
            }
            batch.clear();
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t i = order[k];
                batch.push_back(assemble(train_set[i], *demos[i].hateful, *demos[i].non_hateful,
                                         model.spec().layout, vocab));
                batch.back().label = train_set[i].label;
            }
            Graph<T> g;
            const BatchLoss<T> bl = batch_loss<T>(model, g, batch, cfg.loss, weights);
            const LossReport r = bl.terms.report();
            check_finite(r, epoch, index);
            model.parameters().zero_grad();
            g.backward(bl.terms.total);
            adam.step();

            const auto m = static_cast<double>(batch.size());
            log.loss.ce += r.ce * m;
            log.loss.l1 += r.l1 * m;
            log.loss.l2 += r.l2 * m;
            log.loss.total += r.total * m;
            const auto predicted = predict(bl.output.head.scores.all.value());
            for (std::size_t k = 0; k < batch.size(); ++k) {
                correct += predicted[k] == *batch[k].label ? 1 : 0;
            }
            seen += batch.size();
        }
        const auto n = static_cast<double>(seen);
        log.loss.ce /= n;
        log.loss.l1 /= n;
        log.loss.l2 /= n;
        log.loss.total /= n;
        log.train_acc = static_cast<double>(correct) / n;
        logs.push_back(log);
        if (on_epoch) {
            on_epoch(log);
        }
    }
    return logs;
}

Dataset load_dataset(const RunConfig& cfg)
{
    if (cfg.corpus.synthetic) {
        auto s = generate_synthetic(*cfg.corpus.synthetic);
        return {std::move(s.train), std::move(s.test), std::move(s.demos)};
    }
    if (cfg.corpus.train_path.empty() || cfg.corpus.test_path.empty()) {
        throw ConfigError("corpus: set train_path and test_path, or synthetic");
    }
    Dataset d;
    d.train = load_corpus(cfg.corpus.train_path, cfg.corpus.schema, Split::Train).records;
    d.test = load_corpus(cfg.corpus.test_path, cfg.corpus.schema, Split::Test).records;
    return d;
}

namespace {

struct Prepared {
    Vocabulary vocab;
    DemonstrationPool pool;
};

Prepared prepare(const RunConfig& cfg, const Dataset& data)
{
    cfg.validate();
    if (data.train.empty()) {
        throw DataError("training split is empty");
    }
    return {Vocabulary::build(data.train, cfg.encoder.min_freq, cfg.prompt),
            DemonstrationPool::from_training(data.demo_source(), cfg.corpus.demo_pool_limit, cfg.trainer.seed)};
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    return out;
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg, const Dataset& data, const std::optional<std::filesystem::path>& out_dir,
                         std::ostream* progress)
{
    const Prepared prep = prepare(cfg, data);
    std::ofstream log_file;
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        auto snap = open_out(*out_dir / kSnapshotFile);
        snap << to_json(cfg).dump(2) << '\n';
        log_file = open_out(*out_dir / kLogFile);
    }
    const auto on_epoch = [&](const EpochLog& e) {
        const std::string line = e.to_json().dump();
        if (log_file.is_open()) {
            log_file << line << '\n';
        }
        if (progress != nullptr) {
            *progress << line << '\n';
        }
    };
    return with_precision(cfg.trainer.precision, [&]<typename T>() {
        PenModel<T> model(ModelSpec::from(cfg), prep.vocab);
        RunResult r;
        r.epochs = train(model, prep.vocab, data.train, prep.pool, cfg, on_epoch);
        r.test_predictions =
            predict_corpus(model, prep.vocab, data.test, prep.pool, cfg.eval_seed(), cfg.trainer.batch_size);
        if (data.test.empty()) {
            r.test_predictions.dim = model.encoder().dim();
        } else {
            r.metrics = metrics_of(r.test_predictions);
        }
        if (out_dir) {
            write_checkpoint(*out_dir / kCheckpointFile, snapshot(model.parameters()));
            if (!data.test.empty()) {
                write_metrics(*out_dir / kMetricsFile, r.metrics);
            }
            write_features(*out_dir / kFeaturesFile, r.test_predictions);
        }
        return r;
    });
}

Predictions predict_from_checkpoint(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                                    const std::vector<MemeRecord>& records)
{
    const Prepared prep = prepare(cfg, data);
    const auto tensors = read_checkpoint(run_dir / kCheckpointFile);
    return with_precision(cfg.trainer.precision, [&]<typename T>() {
        PenModel<T> model(ModelSpec::from(cfg), prep.vocab);
        restore(model.parameters(), tensors);
        if (records.empty()) {
            Predictions p;
            p.dim = model.encoder().dim();
            return p;
        }
        return predict_corpus(model, prep.vocab, records, prep.pool, cfg.eval_seed(), cfg.trainer.batch_size);
    });
}

const std::vector<std::string>& ablation_names()
{
    static const std::vector<std::string> names = {"w/o PMP",  "w/o L1",   "w/o L2",    "w/o PCL",
                                                   "w/o s4",   "w/o s2s3", "w/o s2s3s4"};
    return names;
}

RunConfig apply_ablation(const RunConfig& base, std::string_view name)
{
    RunConfig cfg = base;
    auto drop = [&](std::initializer_list<std::size_t> views) {
        std::vector<std::string> keep;
        for (const auto& v : cfg.trainer.views.names()) {
            const auto k = static_cast<std::size_t>(v[1] - '1');
            if (std::find(views.begin(), views.end(), k) == views.end()) {
                keep.push_back(v);
            }
        }
        cfg.trainer.views = ViewSet::parse(keep);
    };
    if (name == "Pen") {
        return cfg;
    }
    if (name == "w/o PMP") {
        cfg.trainer.pmp_enabled = false;
        drop({1, 2, 3});
    } else if (name == "w/o L1") {
        cfg.loss.alpha = 0.0;
    } else if (name == "w/o L2") {
        cfg.loss.beta = 0.0;
    } else if (name == "w/o PCL") {
        cfg.loss.alpha = 0.0;
        cfg.loss.beta = 0.0;
    } else if (name == "w/o s4") {
        drop({3});
    } else if (name == "w/o s2s3") {
        drop({1, 2});
    } else if (name == "w/o s2s3s4") {
        drop({1, 2, 3});
    } else {
        throw ConfigError("unknown ablation \"" + std::string(name) + "\"");
    }
    cfg.head().validate();
    return cfg;
}

std::vector<AblationRow> ablate(const RunConfig& base, const Dataset& data, std::span<const std::string> grid,
                                std::span<const std::uint64_t> seeds, std::ostream* progress)
{
    std::vector<std::string> names = {"Pen"};
    names.insert(names.end(), grid.begin(), grid.end());
    std::vector<RunConfig> configs;
    for (const auto& n : names) {
        configs.push_back(apply_ablation(base, n));
    }
    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto run = [&](std::uint64_t seed) {
            RunConfig cfg = configs[i];
            cfg.trainer.seed = seed;
            cfg.eval.seed = seed;
            const RunResult r = run_experiment(cfg, data);
            if (progress != nullptr) {
                *progress << names[i] << " seed=" << seed << " accuracy=" << r.metrics.accuracy
                          << " macro_f1=" << r.metrics.macro_f1 << '\n';
            }
            return r.metrics;
        };
        rows.push_back({names[i], multi_seed_evaluate(run, seeds)});
    }
    return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows)
{
    out << "config,seed,accuracy,macro_f1\n";
    const auto real = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        for (const auto& run : row.report.runs) {
            out << row.name << ',' << run.seed << ',' << real(run.metrics.accuracy) << ','
                << real(run.metrics.macro_f1) << '\n';
        }
        out << row.name << ",mean," << real(row.report.mean_accuracy) << ',' << real(row.report.mean_macro_f1)
            << '\n';
    }
}

#define PEN_INSTANTIATE(T)                                                                                      \
    template BatchLoss<T> batch_loss(const PenModel<T>&, Graph<T>&, std::span<const AssembledSequence>,       \
                                     const LossConfig&, std::optional<std::array<double, 2>>);               \
    template std::vector<EpochLog> train(PenModel<T>&, const Vocabulary&, const std::vector<MemeRecord>&,      \
                                         const DemonstrationPool&, const RunConfig&,                           \
                                         const std::function<void(const EpochLog&)>&);

PEN_INSTANTIATE(float)
PEN_INSTANTIATE(double)

#undef PEN_INSTANTIATE

}  // namespace pen
