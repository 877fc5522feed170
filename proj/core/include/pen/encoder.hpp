#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pen/assembler.hpp"
#include "pen/autograd.hpp"
#include "pen/checkpoint.hpp"

namespace pen {

/// Per-token features E of a batch of assembled sequences.
template <typename T>
struct EncodedBatch {
    Var<T> embeddings;  // [batch, n, d]
    LayoutOffsets offsets;
    std::vector<RegionLengths> real_lengths;
    std::vector<std::optional<Label>> labels;

    std::size_t batch() const { return real_lengths.size(); }
    std::size_t dim() const { return embeddings.shape().back(); }
};

template <typename T>
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual std::size_t dim() const = 0;
    /// All sequences must share one layout.
    virtual EncodedBatch<T> encode(Graph<T>& g, std::span<const AssembledSequence> batch) = 0;
};

struct TinyEncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t seq_len = 0;  // n
    std::size_t dim = 64;
    // Bidirectional LSTM context layer over non-pad tokens.
    bool mixing = true;
};

/// token embedding + positional embedding, plus (when mixing is on) the summed
/// outputs of a forward and a backward LSTM run over each sequence's non-pad
/// tokens. Pad rows receive no context.
template <typename T>
class TinyEncoder final : public Encoder<T> {
public:
    /// Registers "encoder.*" parameters in `params`.
    TinyEncoder(ParameterSet<T>& params, const TinyEncoderConfig& cfg, std::mt19937_64& rng);

    std::size_t dim() const override { return cfg_.dim; }
    EncodedBatch<T> encode(Graph<T>& g, std::span<const AssembledSequence> batch) override;

    const TinyEncoderConfig& config() const { return cfg_; }

private:
    TinyEncoderConfig cfg_;
    Parameter<T>* tokens_ = nullptr;
    Parameter<T>* positions_ = nullptr;
    LstmParams<T> forward_;
    LstmParams<T> backward_;
};

// Embedding archive, little-endian:
//   "PENE" | version u32 | d u32 | n u32 | count u64
//   per record: id length u16 | id | f32 n x d row-major
inline constexpr std::uint32_t kArchiveVersion = 1;

struct EmbeddingArchive {
    std::uint32_t dim = 0;
    std::uint32_t seq_len = 0;
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;  // one n*d block per id

    const std::vector<float>* find(const std::string& id) const;
    void add(std::string id, std::vector<float> block);

private:
    std::unordered_map<std::string, std::size_t> index_;

    friend EmbeddingArchive read_embedding_archive(const std::filesystem::path& path);
};

void write_embedding_archive(const std::filesystem::path& path, const EmbeddingArchive& archive);
EmbeddingArchive read_embedding_archive(const std::filesystem::path& path);

/// Precomputed, frozen embeddings looked up by instance id.
template <typename T>
class FileEncoder final : public Encoder<T> {
public:
    explicit FileEncoder(EmbeddingArchive archive);
    explicit FileEncoder(const std::filesystem::path& path) : FileEncoder(read_embedding_archive(path)) {}

    std::size_t dim() const override { return archive_.dim; }
    EncodedBatch<T> encode(Graph<T>& g, std::span<const AssembledSequence> batch) override;

private:
    EmbeddingArchive archive_;
};

/// Views of E at the layout's fixed offsets.
template <typename T>
struct RegionSlices {
    Var<T> infer;         // [B, len_infer, d]
    Var<T> infer_prompt;  // [B, len_prompt, d]
    Var<T> neg;
    Var<T> neg_prompt;
    Var<T> pos;
    Var<T> pos_prompt;
    Var<T> special_infer;  // [B, d], row at the mask position
    Var<T> special_neg;    // hateful label word
    Var<T> special_pos;    // non-hateful label word
};

template <typename T>
RegionSlices<T> slice_regions(const EncodedBatch<T>& enc);

}  // namespace pen
