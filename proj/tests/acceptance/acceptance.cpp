// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Progress notes go to stderr.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "pen/layers.hpp"
#include "pen/pmp.hpp"
#include "pen/trainer.hpp"
#include "pen_oracle/oracle.hpp"

namespace {

using namespace pen;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeed = 2024;

struct Outcome {
    bool passed = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome oracle_criterion(const oracle::CheckResult& r, double elapsed, double budget)
{
    return {r.passed && elapsed < budget,
            r.name + " max_error=" + fmt("%.3g", r.max_error) + " tol=" + fmt("%.3g", r.tolerance) +
                " time=" + fmt("%.1fs", elapsed) + " (" + r.detail + ")"};
}

Outcome c1_gradients()
{
    const auto t0 = Clock::now();
    const auto r = oracle::check_gradients(kSeed, 1000);
    return oracle_criterion(r, seconds_since(t0), 120.0);
}

Outcome c2_loss_oracles()
{
    const auto t0 = Clock::now();
    const auto r = oracle::check_losses(kSeed, 100);
    return oracle_criterion(r, seconds_since(t0), 30.0);
}

Outcome c3_analytic_losses()
{
    Graph<double> g;
    const std::vector<Label> same(4, Label::NonHateful);
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<double> random_masks({4, 6});
    for (auto& v : random_masks.data) {
        v = n(rng);
    }
    const double single = l1_category_contrastive(g.constant(random_masks), same, 0.3).value().item();
    const std::vector<Label> pair{Label::Hateful, Label::NonHateful};
    const double ortho =
        l1_category_contrastive(g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1})), pair, 1.0).value().item();
    const std::vector<Label> one{Label::Hateful};
    const double ce = cross_entropy(g.constant(Tensor<double>({1, 2})), one).value().item();
    const bool ok = single == 0.0 && std::abs(ortho - 0.3133) < 1e-4 && std::abs(ce - std::log(2.0)) < 1e-9;
    return {ok, fmt("L1(single-label)=%.3g L1(orthogonal)=%.6f CE(0,0)-ln2=%.3g", single, ortho, ce - std::log(2.0))};
}

// Perception-head invariants on random parameter draws.
Outcome c4_structure()
{
    const auto layout = oracle::check_layout(kSeed, 1000);

    constexpr std::size_t d = 6;
    constexpr std::size_t batch = 4;
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto input = [&](Graph<double>& g) {
        Tensor<double> t({batch, d});
        for (auto& v : t.data) {
            v = n(rng);
        }
        return g.constant(std::move(t));
    };

    double additivity = 0.0;
    double gate_violation = 0.0;
    for (int draw = 0; draw < 20; ++draw) {
        ParameterSet<double> params;
        const auto p = PerceptionParams<double>::create(params, d, {}, rng);
        for (auto& prm : params.items()) {
            for (auto& v : prm.value.data) {
                v = n(rng);
            }
        }
        Graph<double> g;
        const auto t = input(g);
        const auto m = input(g);
        const auto i0 = input(g);
        const auto i1 = input(g);
        const auto ih = gate_fuse(g, p, i0, i1);
        for (unsigned mask = 1; mask < 16; ++mask) {
            const ViewSet views = ViewSet::from_mask(mask);
            const auto s = multi_view_score(g, p, t, m, i0, i1, ih, views);
            for (std::size_t i = 0; i < batch * 2; ++i) {
                double expect = 0.0;
                for (std::size_t k = 0; k < 4; ++k) {
                    expect += views.enabled(k) ? p.lmhead[k](g, add(std::vector{t, i0, i1, ih}[k], m)).value()[i] : 0.0;
                }
                additivity = std::max(additivity, std::abs(s.all.value()[i] - expect));
            }
        }
        for (int k = 0; k < 50; ++k) {
            const auto a = input(g);
            const auto b = input(g);
            const auto f = gate_fuse(g, p, a, b);
            for (std::size_t i = 0; i < f.value().size(); ++i) {
                const double lo = std::min(a.value()[i], b.value()[i]);
                const double hi = std::max(a.value()[i], b.value()[i]);
                gate_violation = std::max({gate_violation, lo - f.value()[i], f.value()[i] - hi});
            }
        }
    }

    // w/o PMP: perception parameters get exactly zero gradient.
    RunConfig cfg = apply_ablation(RunConfig{}, "w/o PMP");
    cfg.layout = {16, 8, 3};
    cfg.encoder.dim = 8;
    SyntheticSpec syn;
    syn.n_train = 16;
    const auto data = generate_synthetic(syn);
    const auto vocab = Vocabulary::build(data.train, 1, cfg.prompt);
    const auto pool = DemonstrationPool::from_training(data.train);
    PenModel<double> model(ModelSpec::from(cfg), vocab);
    std::vector<AssembledSequence> seqs;
    auto demo_rng = std::mt19937_64(kSeed);
    for (const auto& r : data.train) {
        const DemoPair dp = sample_demonstrations(pool, demo_rng, r.id);
        seqs.push_back(assemble(r, *dp.hateful, *dp.non_hateful, cfg.layout, vocab));
    }
    double isolated = 0.0;
    {
        Graph<double> g;
        const auto bl = batch_loss(model, g, seqs, cfg.loss);
        g.backward(bl.terms.total);
    }
    for (const auto& prm : model.parameters().items()) {
        if (prm.name.starts_with("head.hpn") || prm.name.starts_with("head.nhpn") || prm.name.starts_with("head.gate")) {
            for (const double v : prm.grad.data) {
                isolated = std::max(isolated, std::abs(v));
            }
        }
    }

    const bool ok = layout.passed && layout.max_error == 0.0 && additivity < 1e-6 && gate_violation <= 1e-12 &&
                    isolated == 0.0;
    return {ok, "layout mismatches=" + fmt("%.0f", layout.max_error) + " additivity=" + fmt("%.3g", additivity) +
                    " gate_violation=" + fmt("%.3g", std::max(0.0, gate_violation)) +
                    " w/o-PMP max |grad|=" + fmt("%.3g", isolated)};
}

RunConfig synthetic_config(double noise)
{
    RunConfig cfg;
    SyntheticSpec syn;
    syn.noise_rate = noise;
    cfg.corpus.synthetic = syn;
    cfg.validate();
    return cfg;
}

struct TrainedRuns {
    RunResult pen;
    double pen_seconds = 0.0;
    fs::path dir_a;
    fs::path dir_b;
};

Outcome c5_separability(const TrainedRuns& runs)
{
    const auto& m = runs.pen.metrics;
    const bool ok = m.accuracy >= 0.95 && m.macro_f1 >= 0.95 && runs.pen_seconds < 300.0;
    return {ok, fmt("accuracy=%.4f macro_f1=%.4f epochs=%.0f time=%.1fs", m.accuracy, m.macro_f1,
                    static_cast<double>(runs.pen.epochs.size()), runs.pen_seconds)};
}

Outcome c6_ablation_order()
{
    RunConfig cfg = synthetic_config(0.15);
    cfg.corpus.synthetic->signal_demos = true;
    const Dataset data = load_dataset(cfg);
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    const std::vector<std::string> grid{"w/o s2s3s4"};
    const auto rows = ablate(cfg, data, grid, seeds, &std::cerr);
    const double pen = rows[0].report.mean_macro_f1;
    const double s1 = rows[1].report.mean_macro_f1;
    return {pen >= s1, fmt("Pen mean macro_f1=%.4f, w/o s2,s3,s4=%.4f, gap=%+.4f", pen, s1, pen - s1)};
}

Outcome c7_clustering(const TrainedRuns& runs)
{
    const double with_pcl = class_cosine_gap(runs.pen.test_predictions);
    RunConfig cfg = apply_ablation(synthetic_config(0.0), "w/o PCL");
    const RunResult plain = run_experiment(cfg, load_dataset(cfg), std::nullopt, &std::cerr);
    const double without = class_cosine_gap(plain.test_predictions);
    return {with_pcl >= 0.1 && without < with_pcl,
            fmt("cosine gap alpha=beta=0.1: %.4f, alpha=beta=0: %.4f", with_pcl, without)};
}

Outcome c8_determinism(const TrainedRuns& runs)
{
    const bool ckpt = slurp(runs.dir_a / kCheckpointFile) == slurp(runs.dir_b / kCheckpointFile);
    const bool metrics = slurp(runs.dir_a / kMetricsFile) == slurp(runs.dir_b / kMetricsFile);
    const bool nonempty = !slurp(runs.dir_a / kCheckpointFile).empty();
    return {ckpt && metrics && nonempty, std::string("checkpoint ") + (ckpt ? "identical" : "differs") + ", metrics " +
                                             (metrics ? "identical" : "differs")};
}

Outcome c9_metrics()
{
    double worst = 0.0;
    const auto all_right = MetricsReport::from_confusion({40, 0, 0, 60});
    worst = std::max({worst, std::abs(all_right.accuracy - 1.0), std::abs(all_right.macro_f1 - 1.0)});
    const auto balanced = MetricsReport::from_confusion({1, 1, 1, 1});
    worst = std::max({worst, std::abs(balanced.accuracy - 0.5), std::abs(balanced.macro_f1 - 0.5)});
    std::vector<Label> gold(124, Label::Hateful);
    gold.resize(354, Label::NonHateful);
    const std::vector<Label> majority(354, Label::NonHateful);
    const auto harm = MetricsReport::from_confusion(confusion_of(gold, majority));
    const double acc = 230.0 / 354.0;
    const double f1 = (0.0 + 2.0 * acc / (acc + 1.0)) / 2.0;
    worst = std::max({worst, std::abs(harm.accuracy - acc), std::abs(harm.macro_f1 - f1)});
    const bool ok = worst < 1e-12 && std::abs(harm.accuracy - 0.6497) < 5e-5;
    return {ok, fmt("max deviation=%.3g, majority baseline accuracy=%.4f macro_f1=%.4f", worst, harm.accuracy,
                    harm.macro_f1)};
}

}  // namespace

int main()
{
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    const fs::path root = fs::temp_directory_path() / ("pen-acceptance-" + std::to_string(std::random_device{}()));
    TrainedRuns runs;
    bool trained = false;
    const auto ensure_trained = [&]() -> const TrainedRuns& {
        if (!trained) {
            const RunConfig cfg = synthetic_config(0.0);
            const Dataset data = load_dataset(cfg);
            runs.dir_a = root / "a";
            runs.dir_b = root / "b";
            const auto t0 = Clock::now();
            runs.pen = run_experiment(cfg, data, runs.dir_a, &std::cerr);
            runs.pen_seconds = seconds_since(t0);
            run_experiment(cfg, data, runs.dir_b, &std::cerr);
            trained = true;
        }
        return runs;
    };

    criteria.emplace_back("gradient fidelity", c1_gradients);
    criteria.emplace_back("loss oracle equivalence", c2_loss_oracles);
    criteria.emplace_back("analytic loss values", c3_analytic_losses);
    criteria.emplace_back("structural invariants", c4_structure);
    criteria.emplace_back("synthetic separability", [&] { return c5_separability(ensure_trained()); });
    criteria.emplace_back("ablation ordering", c6_ablation_order);
    criteria.emplace_back("contrastive clustering", [&] { return c7_clustering(ensure_trained()); });
    criteria.emplace_back("determinism", [&] { return c8_determinism(ensure_trained()); });
    criteria.emplace_back("metric correctness", c9_metrics);

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.passed ? 0 : 1;
        std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << (i + 1) << " " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    fs::remove_all(root);
    return failures == 0 ? 0 : 1;
}
