#include <random>

#include <benchmark/benchmark.h>

#include "pen/layers.hpp"
#include "pen/trainer.hpp"

namespace {

using pen::Graph;
using pen::Tensor;

Tensor<float> random_tensor(pen::Shape shape, std::mt19937_64& rng)
{
    std::normal_distribution<float> n(0.0f, 1.0f);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) {
        v = n(rng);
    }
    return t;
}

// Forward and backward through one LSTM sequence pass, [batch, steps, dim].
void BM_LstmSequence(benchmark::State& state)
{
    const auto steps = static_cast<std::size_t>(state.range(0));
    const std::size_t batch = 16;
    const std::size_t dim = 64;
    std::mt19937_64 rng(1);
    pen::ParameterSet<float> params;
    const auto lstm = pen::make_lstm(params, "lstm", dim, dim, rng);
    pen::Parameter<float> x("x", random_tensor({batch, steps, dim}, rng));
    const std::vector<std::size_t> lengths(batch, steps);
    for (auto _ : state) {
        Graph<float> g;
        const auto h = pen::lstm_sequence(g.parameter(x), lstm, lengths, false);
        g.backward(pen::sum(h));
        benchmark::DoNotOptimize(x.grad.data.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * steps));
}
BENCHMARK(BM_LstmSequence)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

// One optimiser step of the full model on a batch of 16 under the default layout.
void BM_TrainStep(benchmark::State& state)
{
    pen::RunConfig cfg;
    pen::SyntheticSpec syn;
    syn.n_train = 32;
    syn.n_test = 2;
    cfg.corpus.synthetic = syn;
    cfg.encoder.mixing = state.range(0) != 0;
    const pen::Dataset data = pen::load_dataset(cfg);
    const auto vocab = pen::Vocabulary::build(data.train, 1, cfg.prompt);
    const auto pool = pen::DemonstrationPool::from_training(data.train);
    pen::PenModel<float> model(pen::ModelSpec::from(cfg), vocab);
    pen::RunConfig one = cfg;
    one.trainer.epochs = 1;
    std::vector<pen::MemeRecord> batch(data.train.begin(), data.train.begin() + 16);
    for (auto _ : state) {
        benchmark::DoNotOptimize(pen::train(model, vocab, batch, pool, one));
    }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
