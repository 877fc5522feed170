#include "pen/model.hpp"

#include "pen/random.hpp"

namespace pen {

ModelSpec ModelSpec::from(const RunConfig& cfg)
{
    return {cfg.layout, cfg.encoder, cfg.head(), cfg.trainer.seed};
}

template <typename T>
PenModel<T>::PenModel(const ModelSpec& spec, const Vocabulary& vocab)
    : spec_(spec), params_(std::make_unique<ParameterSet<T>>())
{
    spec_.head.validate();
    auto rng = make_rng(spec_.seed, Stream::Init);
    if (spec_.encoder.kind == EncoderKind::Tiny) {
        TinyEncoderConfig tc;
        tc.vocab_size = vocab.size();
        tc.seq_len = layout_offsets(spec_.layout).total;
        tc.dim = spec_.encoder.dim;
        tc.mixing = spec_.encoder.mixing;
        encoder_ = std::make_unique<TinyEncoder<T>>(*params_, tc, rng);
    } else {
        if (spec_.encoder.archive.empty()) {
            throw ConfigError("encoder.archive is required for the file encoder");
        }
        encoder_ = std::make_unique<FileEncoder<T>>(std::filesystem::path(spec_.encoder.archive));
    }
    head_ = PerceptionParams<T>::create(*params_, encoder_->dim(), spec_.head, rng);
}

template <typename T>
PenModel<T>::PenModel(const ModelSpec& spec, std::unique_ptr<Encoder<T>> encoder)
    : spec_(spec), params_(std::make_unique<ParameterSet<T>>()), encoder_(std::move(encoder))
{
    spec_.head.validate();
    auto rng = make_rng(spec_.seed, Stream::Init);
    head_ = PerceptionParams<T>::create(*params_, encoder_->dim(), spec_.head, rng);
}

template <typename T>
typename PenModel<T>::Output PenModel<T>::forward(Graph<T>& g, std::span<const AssembledSequence> batch) const
{
    Output out;
    out.encoded = encoder_->encode(g, batch);
    out.head = run_head(g, head_, spec_.head, out.encoded);
    return out;
}

template class PenModel<float>;
template class PenModel<double>;

}  // namespace pen
