#include "pen/encoder.hpp"

#include <fstream>
#include <limits>

#include "pen/binary_io.hpp"
#include "pen/layers.hpp"

namespace pen {

namespace {

void check_layout(std::span<const AssembledSequence> batch)
{
    if (batch.empty()) {
        throw Error("encode: empty batch");
    }
    for (const auto& s : batch) {
        if (!(s.offsets == batch[0].offsets) || s.token_ids.size() != batch[0].offsets.total) {
            throw ShapeError("encode: sequences do not share one layout");
        }
    }
}

template <typename T>
EncodedBatch<T> with_metadata(Var<T> embeddings, std::span<const AssembledSequence> batch)
{
    EncodedBatch<T> enc;
    enc.embeddings = embeddings;
    enc.offsets = batch[0].offsets;
    for (const auto& s : batch) {
        enc.real_lengths.push_back(s.real_lengths);
        enc.labels.push_back(s.label);
    }
    return enc;
}

}  // namespace

template <typename T>
TinyEncoder<T>::TinyEncoder(ParameterSet<T>& params, const TinyEncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg)
{
    if (cfg.vocab_size == 0 || cfg.seq_len == 0 || cfg.dim == 0) {
        throw ConfigError("tiny encoder: vocab_size, seq_len and dim must be positive");
    }
    tokens_ = &params.add("encoder.token_embedding", uniform_tensor<T>({cfg.vocab_size, cfg.dim}, T{0.5}, rng));
    positions_ = &params.add("encoder.position_embedding", uniform_tensor<T>({cfg.seq_len, cfg.dim}, T{0.1}, rng));
    if (cfg.mixing) {
        forward_ = make_lstm(params, "encoder.mix_forward", cfg.dim, cfg.dim, rng);
        backward_ = make_lstm(params, "encoder.mix_backward", cfg.dim, cfg.dim, rng);
    }
}

template <typename T>
EncodedBatch<T> TinyEncoder<T>::encode(Graph<T>& g, std::span<const AssembledSequence> batch)
{
    check_layout(batch);
    const std::size_t B = batch.size();
    const std::size_t n = batch[0].offsets.total;
    const std::size_t d = cfg_.dim;
    if (n != cfg_.seq_len) {
        throw ShapeError("tiny encoder: sequence length " + std::to_string(n) + " but encoder was built for " +
                         std::to_string(cfg_.seq_len));
    }
    std::vector<std::size_t> ids;
    std::vector<std::size_t> pos;
    ids.reserve(B * n);
    pos.reserve(B * n);
    for (const auto& s : batch) {
        for (std::size_t t = 0; t < n; ++t) {
            if (s.token_ids[t] >= cfg_.vocab_size) {
                throw ShapeError("tiny encoder: token id " + std::to_string(s.token_ids[t]) + " outside vocabulary");
            }
            ids.push_back(s.token_ids[t]);
            pos.push_back(t);
        }
    }
    Var<T> base = add(gather_rows(g.parameter(*tokens_), ids), gather_rows(g.parameter(*positions_), pos));
    if (!cfg_.mixing) {
        return with_metadata(reshape(base, {B, n, d}), batch);
    }

    // Pack the non-pad rows of each sequence to the front.
    std::vector<std::vector<std::size_t>> real(B);
    std::size_t longest = 0;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < n; ++t) {
            if (batch[b].token_ids[t] != Vocabulary::kPad) {
                real[b].push_back(b * n + t);
            }
        }
        longest = std::max(longest, real[b].size());
    }
    std::vector<std::size_t> packed_src(B * longest);
    std::vector<std::size_t> lengths(B);
    std::vector<std::size_t> valid_rows;
    std::vector<std::size_t> target_rows;
    for (std::size_t b = 0; b < B; ++b) {
        lengths[b] = real[b].size();
        for (std::size_t t = 0; t < longest; ++t) {
            // Steps past a sample's length are never read by the recurrence.
            packed_src[b * longest + t] = t < real[b].size() ? real[b][t] : b * n;
            if (t < real[b].size()) {
                valid_rows.push_back(b * longest + t);
                target_rows.push_back(real[b][t]);
            }
        }
    }
    Var<T> packed = reshape(gather_rows(base, packed_src), {B, longest, d});
    Var<T> fwd = lstm_sequence(packed, forward_, lengths, false);
    Var<T> bwd = lstm_sequence(packed, backward_, lengths, true);
    Var<T> context = reshape(add(fwd, bwd), {B * longest, d});
    Var<T> placed = scatter_rows(gather_rows(context, valid_rows), target_rows, B * n);
    return with_metadata(reshape(add(base, placed), {B, n, d}), batch);
}

const std::vector<float>* EmbeddingArchive::find(const std::string& id) const
{
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &rows[it->second];
}

void EmbeddingArchive::add(std::string id, std::vector<float> block)
{
    if (block.size() != static_cast<std::size_t>(dim) * seq_len) {
        throw DataError("embedding archive: block for '" + id + "' has " + std::to_string(block.size()) +
                        " values, expected n*d = " + std::to_string(static_cast<std::size_t>(dim) * seq_len));
    }
    if (index_.count(id) > 0) {
        throw DataError("embedding archive: duplicate id '" + id + "'");
    }
    index_.emplace(id, ids.size());
    ids.push_back(std::move(id));
    rows.push_back(std::move(block));
}

void write_embedding_archive(const std::filesystem::path& path, const EmbeddingArchive& archive)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open embedding archive for writing: " + path.string());
    }
    out.write("PENE", 4);
    io::write_le<std::uint32_t>(out, kArchiveVersion);
    io::write_le<std::uint32_t>(out, archive.dim);
    io::write_le<std::uint32_t>(out, archive.seq_len);
    io::write_le<std::uint64_t>(out, archive.ids.size());
    for (std::size_t i = 0; i < archive.ids.size(); ++i) {
        const auto& id = archive.ids[i];
        if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw DataError("embedding archive: id too long");
        }
        io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (float v : archive.rows[i]) {
            io::write_le<float>(out, v);
        }
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

EmbeddingArchive read_embedding_archive(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open embedding archive: " + path.string());
    }
    io::expect_magic(in, "PENE", path.string());
    const auto version = io::read_le<std::uint32_t>(in, "version");
    if (version != kArchiveVersion) {
        throw DataError(path.string() + ": unsupported archive version " + std::to_string(version));
    }
    EmbeddingArchive a;
    a.dim = io::read_le<std::uint32_t>(in, "d");
    a.seq_len = io::read_le<std::uint32_t>(in, "n");
    const auto count = io::read_le<std::uint64_t>(in, "count");
    const std::size_t block = static_cast<std::size_t>(a.dim) * a.seq_len;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = io::read_le<std::uint16_t>(in, "id length");
        std::string id(len, '\0');
        io::read_exact(in, id.data(), len, "id");
        std::vector<float> values(block);
        io::read_exact(in, reinterpret_cast<char*>(values.data()), block * sizeof(float), "embeddings");
        a.add(std::move(id), std::move(values));
    }
    return a;
}

template <typename T>
FileEncoder<T>::FileEncoder(EmbeddingArchive archive) : archive_(std::move(archive))
{
    if (archive_.dim == 0 || archive_.seq_len == 0) {
        throw DataError("embedding archive has zero d or n");
    }
}

template <typename T>
EncodedBatch<T> FileEncoder<T>::encode(Graph<T>& g, std::span<const AssembledSequence> batch)
{
    check_layout(batch);
    const std::size_t n = batch[0].offsets.total;
    const std::size_t d = archive_.dim;
    if (n != archive_.seq_len) {
        throw ShapeError("file encoder: archive stores n = " + std::to_string(archive_.seq_len) +
                         " but the layout has n = " + std::to_string(n));
    }
    Tensor<T> e({batch.size(), n, d});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto* rows = archive_.find(batch[b].instance_id);
        if (rows == nullptr) {
            throw DataError("file encoder: id '" + batch[b].instance_id + "' not in archive");
        }
        std::copy(rows->begin(), rows->end(), e.data.begin() + static_cast<std::ptrdiff_t>(b * n * d));
    }
    return with_metadata(g.constant(std::move(e)), batch);
}

template <typename T>
RegionSlices<T> slice_regions(const EncodedBatch<T>& enc)
{
    const auto& o = enc.offsets;
    const auto& e = enc.embeddings;
    RegionSlices<T> r;
    r.infer = slice(e, 1, o.infer.begin, o.infer.end);
    r.infer_prompt = slice(e, 1, o.infer_prompt.begin, o.infer_prompt.end);
    r.neg = slice(e, 1, o.neg.begin, o.neg.end);
    r.neg_prompt = slice(e, 1, o.neg_prompt.begin, o.neg_prompt.end);
    r.pos = slice(e, 1, o.pos.begin, o.pos.end);
    r.pos_prompt = slice(e, 1, o.pos_prompt.begin, o.pos_prompt.end);
    r.special_infer = select(e, 1, o.mask);
    r.special_neg = select(e, 1, o.neg_label);
    r.special_pos = select(e, 1, o.pos_label);
    return r;
}

template class TinyEncoder<float>;
template class TinyEncoder<double>;
template class FileEncoder<float>;
template class FileEncoder<double>;
template RegionSlices<float> slice_regions(const EncodedBatch<float>&);
template RegionSlices<double> slice_regions(const EncodedBatch<double>&);

}  // namespace pen
