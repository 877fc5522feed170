#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pen/model.hpp"
#include "pen/pcl.hpp"
#include "pen/random.hpp"
#include "pen/trainer.hpp"
#include "pen_oracle/oracle.hpp"

namespace pen::oracle {

namespace {

std::string words(std::mt19937_64& rng, std::size_t n, std::size_t vocab)
{
    std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        s += (i ? " t" : "t") + std::to_string(pick(rng));
    }
    return s;
}

MemeRecord random_record(std::mt19937_64& rng, std::string id, Label label, std::size_t max_words)
{
    std::uniform_int_distribution<std::size_t> len(1, max_words);
    std::uniform_int_distribution<std::size_t> opt(0, max_words / 3);
    std::uniform_int_distribution<std::size_t> nk(0, 2);
    MemeRecord r;
    r.id = std::move(id);
    r.label = label;
    r.text = words(rng, len(rng), 100);
    r.caption = words(rng, opt(rng), 100);
    for (std::size_t k = nk(rng); k > 0; --k) {
        r.knowledge.push_back(words(rng, opt(rng), 100));
    }
    return r;
}

std::vector<std::string> expected_region(const MemeRecord& r)
{
    std::vector<std::string> out;
    auto append = [&](const std::string& s, bool dot) {
        std::istringstream in(s);
        std::vector<std::string> w;
        for (std::string t; in >> t;) {
            w.push_back(t);
        }
        if (w.empty()) {
            return;
        }
        if (dot) {
            out.emplace_back(".");
        }
        out.insert(out.end(), w.begin(), w.end());
    };
    append(r.text, false);
    append(r.caption, true);
    for (const auto& k : r.knowledge) {
        append(k, true);
    }
    return out;
}

Mat random_mat(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sd)
{
    std::normal_distribution<double> n(0.0, sd);
    Mat m(rows, Vec(cols));
    for (auto& row : m) {
        for (auto& v : row) {
            v = n(rng);
        }
    }
    return m;
}

Tensor<double> to_tensor(const Mat& m)
{
    Tensor<double> t({m.size(), m.empty() ? 0 : m[0].size()});
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::copy(m[i].begin(), m[i].end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * m[i].size()));
    }
    return t;
}

Mat from_param(const Parameter<double>& p)
{
    const std::size_t cols = p.value.cols();
    Mat m(p.value.rows(), Vec(cols));
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t k = 0; k < cols; ++k) {
            m[i][k] = p.value[i * cols + k];
        }
    }
    return m;
}

CheckResult finish(std::string name, double max_error, double tol, std::string detail)
{
    return {std::move(name), max_error, tol, max_error < tol || (tol == 0.0 && max_error == 0.0),
            std::move(detail)};
}

}  // namespace

CheckResult check_gradients(std::uint64_t seed, std::size_t samples)
{
    std::mt19937_64 rng(seed);
    RunConfig cfg;
    cfg.layout = {10, 5, 3, true};
    cfg.encoder.dim = 8;
    cfg.trainer.precision = Precision::F64;
    cfg.trainer.seed = seed;

    std::vector<MemeRecord> batch_records;
    std::vector<MemeRecord> demos;
    for (std::size_t i = 0; i < 6; ++i) {
        const Label l = i % 2 == 0 ? Label::Hateful : Label::NonHateful;
        batch_records.push_back(random_record(rng, "x" + std::to_string(i), l, 12));
        demos.push_back(random_record(rng, "d" + std::to_string(i), l, 8));
    }
    std::vector<MemeRecord> all = batch_records;
    all.insert(all.end(), demos.begin(), demos.end());
    const Vocabulary vocab = Vocabulary::build(all, 1, cfg.prompt);

    PenModel<double> model(ModelSpec::from(cfg), vocab);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    for (auto& p : model.parameters().items()) {
        for (auto& v : p.value.data) {
            v += jitter(rng);
        }
    }
    std::vector<AssembledSequence> batch;
    for (std::size_t i = 0; i < batch_records.size(); ++i) {
        const std::size_t h = (2 * i) % demos.size();
        batch.push_back(assemble(batch_records[i], demos[h], demos[h + 1], cfg.layout, vocab));
    }
    const auto loss_at = [&] {
        Graph<double> g;
        return batch_loss<double>(model, g, batch, cfg.loss).terms.total.value().item();
    };
    {
        Graph<double> g;
        const auto bl = batch_loss<double>(model, g, batch, cfg.loss);
        model.parameters().zero_grad();
        g.backward(bl.terms.total);
    }

    auto& items = model.parameters().items();
    std::uniform_int_distribution<std::size_t> pick_tensor(0, items.size() - 1);
    double worst = 0.0;
    std::size_t nonzero = 0;
    std::string worst_at;
    for (std::size_t s = 0; s < samples; ++s) {
        auto& p = items[pick_tensor(rng)];
        std::uniform_int_distribution<std::size_t> pick_index(0, p.value.size() - 1);
        const std::size_t i = pick_index(rng);
        const double keep = p.value[i];
        p.value[i] = keep + kFdStep;
        const double up = loss_at();
        p.value[i] = keep - kFdStep;
        const double down = loss_at();
        p.value[i] = keep;
        const double numeric = (up - down) / (2.0 * kFdStep);
        const double analytic = p.grad[i];
        const double err =
            std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
        nonzero += std::abs(analytic) > kGradFloor ? 1 : 0;
        if (err > worst) {
            worst = err;
            worst_at = p.name + "[" + std::to_string(i) + "]";
        }
    }
    return finish("gradient", worst, 1e-4,
                  std::to_string(samples) + " entries (" + std::to_string(nonzero) + " with |grad| > " +
                      "1e-6), worst at " + (worst_at.empty() ? "-" : worst_at));
}

CheckResult check_losses(std::uint64_t seed, std::size_t batches)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_m(2, 32);
    std::uniform_int_distribution<std::size_t> pick_d(1, 64);
    std::uniform_real_distribution<double> pick_tau(0.05, 1.0);
    std::bernoulli_distribution coin(0.5);
    double worst = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t m = pick_m(rng);
        const std::size_t d = pick_d(rng);
        const double tau = pick_tau(rng);
        std::vector<Label> labels(m);
        for (auto& l : labels) {
            l = coin(rng) ? Label::Hateful : Label::NonHateful;
        }
        const Mat masks = random_mat(rng, m, d, 1.0);
        const Mat neg = random_mat(rng, m, d, 1.0);
        const Mat pos = random_mat(rng, m, d, 1.0);
        const Mat scores = random_mat(rng, m, 2, 3.0);
        for (const bool literal : {false, true}) {
            const auto form = literal ? ContrastiveForm::LiteralRatio : ContrastiveForm::InfoNce;
            Graph<double> g;
            const auto vm = g.constant(to_tensor(masks));
            const double v1 = l1_category_contrastive(vm, labels, tau, form).value().item();
            const double v2 = l2_prompt_contrastive(vm, g.constant(to_tensor(neg)), g.constant(to_tensor(pos)),
                                                    labels, tau, form)
                                  .value()
                                  .item();
            worst = std::max(worst, std::abs(v1 - l1(masks, labels, tau, literal)));
            worst = std::max(worst, std::abs(v2 - l2(masks, neg, pos, labels, tau, literal)));
        }
        Graph<double> g;
        const double ce = pen::cross_entropy(g.constant(to_tensor(scores)), labels).value().item();
        worst = std::max(worst, std::abs(ce - oracle::cross_entropy(scores, labels)));
    }
    return finish("loss", worst, 1e-6, std::to_string(batches) + " batches, L1/L2 in both forms plus CE");
}

CheckResult check_lstm(std::uint64_t seed, std::size_t trials)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_b(1, 5);
    std::uniform_int_distribution<std::size_t> pick_t(1, 9);
    std::uniform_int_distribution<std::size_t> pick_d(1, 7);
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const std::size_t batch = pick_b(rng);
        const std::size_t steps = pick_t(rng);
        const std::size_t d = pick_d(rng);
        const std::size_t h = pick_d(rng);
        ParameterSet<double> params;
        const auto lp = make_lstm(params, "lstm", d, h, rng);
        std::normal_distribution<double> bias_noise(0.0, 0.3);
        for (auto& v : lp.bias->value.data) {
            v += bias_noise(rng);
        }
        const LstmWeights w{from_param(*lp.w_input), from_param(*lp.w_hidden), lp.bias->value.data};

        std::uniform_int_distribution<std::size_t> pick_len(0, steps);
        std::vector<std::size_t> lengths(batch);
        for (auto& l : lengths) {
            l = pick_len(rng);
        }
        std::vector<Mat> x;
        Tensor<double> xt({batch, steps, d});
        for (std::size_t b = 0; b < batch; ++b) {
            x.push_back(random_mat(rng, steps, d, 1.0));
            for (std::size_t t = 0; t < steps; ++t) {
                std::copy(x[b][t].begin(), x[b][t].end(),
                          xt.data.begin() + static_cast<std::ptrdiff_t>((b * steps + t) * d));
            }
        }
        Graph<double> g;
        const auto xv = g.constant(xt);
        const auto last = pen::lstm_last(xv, lp, lengths).value();
        const auto ref_last = oracle::lstm_last(x, w, lengths);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < h; ++k) {
                worst = std::max(worst, std::abs(last[b * h + k] - ref_last[b][k]));
            }
        }
        for (const bool reverse : {false, true}) {
            const auto seq = lstm_sequence(xv, lp, lengths, reverse).value();
            const auto ref = oracle::lstm(x, w, lengths, reverse);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t t = 0; t < steps; ++t) {
                    for (std::size_t k = 0; k < h; ++k) {
                        worst = std::max(worst, std::abs(seq[(b * steps + t) * h + k] - ref[b][t][k]));
                    }
                }
            }
        }
    }
    return finish("lstm", worst, 1e-10, std::to_string(trials) + " random shapes, last state and both directions");
}

CheckResult check_layout(std::uint64_t seed, std::size_t records)
{
    std::mt19937_64 rng(seed);
    std::vector<MemeRecord> vocab_src(1);
    for (std::size_t i = 0; i < 100; ++i) {
        vocab_src[0].text += (i ? " t" : "t") + std::to_string(i);
    }
    const Vocabulary vocab = Vocabulary::build(vocab_src, 1);

    std::uniform_int_distribution<std::size_t> pick_infer(2, 48);
    std::bernoulli_distribution coin(0.5);
    std::size_t mismatches = 0;
    std::string first;
    for (std::size_t r = 0; r < records; ++r) {
        RegionLayout l;
        l.len_infer = pick_infer(rng);
        l.len_demo = std::uniform_int_distribution<std::size_t>(1, l.len_infer - 1)(rng);
        l.len_prompt = 3;
        l.hateful_first = coin(rng);
        const MemeRecord inst =
            random_record(rng, "r" + std::to_string(r), coin(rng) ? Label::Hateful : Label::NonHateful, 40);
        const MemeRecord neg = random_record(rng, "n", Label::Hateful, 20);
        const MemeRecord pos = random_record(rng, "p", Label::NonHateful, 20);
        const AssembledSequence seq = assemble(inst, neg, pos, l, vocab);
        const LayoutOffsets o = layout(l);

        std::vector<TokenId> want(o.total, Vocabulary::kPad);
        want[0] = Vocabulary::kStart;
        want[o.sep_infer] = want[o.sep_neg] = want[o.sep_pos] = Vocabulary::kSep;
        const auto put_prompt = [&](Span s, TokenId slot) {
            want[s.begin] = vocab.id("it");
            want[s.begin + 1] = vocab.id("was");
            want[s.begin + 2] = slot;
        };
        put_prompt(o.infer_prompt, Vocabulary::kMask);
        put_prompt(o.neg_prompt, vocab.id("bad"));
        put_prompt(o.pos_prompt, vocab.id("good"));
        RegionLengths real;
        const auto put_region = [&](Span s, const MemeRecord& rec) {
            const auto toks = expected_region(rec);
            const std::size_t n = std::min(toks.size(), s.size());
            for (std::size_t i = 0; i < n; ++i) {
                want[s.begin + i] = vocab.id(toks[i]);
            }
            return n;
        };
        real.infer = put_region(o.infer, inst);
        real.neg = put_region(o.neg, neg);
        real.pos = put_region(o.pos, pos);

        std::size_t bad = seq.offsets == o ? 0 : 1;
        bad += seq.real_lengths == real ? 0 : 1;
        bad += seq.token_ids == want ? 0 : 1;
        if (bad > 0 && first.empty()) {
            first = "first mismatch at record " + std::to_string(r);
        }
        mismatches += bad;
    }
    return finish("layout", static_cast<double>(mismatches), 0.0,
                  std::to_string(records) + " records" + (first.empty() ? "" : ", " + first));
}

std::vector<CheckResult> run_all(std::uint64_t seed)
{
    return {check_gradients(seed), check_losses(seed + 1), check_lstm(seed + 2), check_layout(seed + 3)};
}

}  // namespace pen::oracle
