#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "pen/config.hpp"
#include "pen/encoder.hpp"
#include "pen/pmp.hpp"

namespace pen {

struct ModelSpec {
    RegionLayout layout;
    EncoderConfig encoder;
    HeadOptions head;
    std::uint64_t seed = 0;

    static ModelSpec from(const RunConfig& cfg);
};

/// Encoder plus head over one parameter set. Encoder parameters are
/// registered before head parameters, so the checkpoint order is fixed by
/// the spec alone.
template <typename T>
class PenModel {
public:
    struct Output {
        EncodedBatch<T> encoded;
        PerceptionBundle<T> head;
    };

    PenModel(const ModelSpec& spec, const Vocabulary& vocab);
    /// Head-only model over a caller-supplied encoder that owns no parameters
    /// in this set (e.g. a FileEncoder).
    PenModel(const ModelSpec& spec, std::unique_ptr<Encoder<T>> encoder);

    Output forward(Graph<T>& g, std::span<const AssembledSequence> batch) const;

    ParameterSet<T>& parameters() { return *params_; }
    const ParameterSet<T>& parameters() const { return *params_; }
    const PerceptionParams<T>& head() const { return head_; }
    const ModelSpec& spec() const { return spec_; }
    Encoder<T>& encoder() const { return *encoder_; }

private:
    ModelSpec spec_;
    std::unique_ptr<ParameterSet<T>> params_;
    std::unique_ptr<Encoder<T>> encoder_;
    PerceptionParams<T> head_;
};

}  // namespace pen
