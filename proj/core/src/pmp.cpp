#include "pen/pmp.hpp"

#include <cmath>

namespace pen {

ViewSet ViewSet::parse(const std::vector<std::string>& names)
{
    std::array<bool, 4> on{};
    for (const auto& n : names) {
        if (n.size() == 2 && n[0] == 's' && n[1] >= '1' && n[1] <= '4') {
            on[static_cast<std::size_t>(n[1] - '1')] = true;
        } else {
            throw ConfigError("unknown view '" + n + "' (expected s1..s4)");
        }
    }
    return ViewSet(on);
}

ViewSet ViewSet::from_mask(unsigned mask)
{
    return ViewSet({(mask & 1U) != 0, (mask & 2U) != 0, (mask & 4U) != 0, (mask & 8U) != 0});
}

std::vector<std::string> ViewSet::names() const
{
    std::vector<std::string> out;
    for (std::size_t k = 0; k < 4; ++k) {
        if (on_[k]) {
            out.push_back("s" + std::to_string(k + 1));
        }
    }
    return out;
}

void HeadOptions::validate() const
{
    if (!views.any()) {
        throw ConfigError("views: at least one of s1..s4 must be enabled");
    }
    if (!pmp_enabled && views.needs_perception()) {
        throw ConfigError("views: s2, s3 and s4 require pmp_enabled");
    }
}

template <typename T>
PerceptionParams<T> PerceptionParams<T>::create(ParameterSet<T>& params, std::size_t dim, const HeadOptions& options,
                                                std::mt19937_64& rng)
{
    options.validate();
    PerceptionParams p;
    if (options.tie_region_lstm) {
        const auto shared = make_lstm(params, "head.region_lstm", dim, dim, rng);
        p.region_lstm = {shared, shared, shared};
    } else {
        p.region_lstm[0] = make_lstm(params, "head.region_lstm_infer", dim, dim, rng);
        p.region_lstm[1] = make_lstm(params, "head.region_lstm_neg", dim, dim, rng);
        p.region_lstm[2] = make_lstm(params, "head.region_lstm_pos", dim, dim, rng);
    }
    p.hpn_hidden = Linear<T>::create(params, "head.hpn.hidden", 2 * dim, dim, rng);
    p.hpn_out = Linear<T>::create(params, "head.hpn.out", dim, dim, rng);
    p.nhpn_hidden = Linear<T>::create(params, "head.nhpn.hidden", 2 * dim, dim, rng);
    p.nhpn_out = Linear<T>::create(params, "head.nhpn.out", dim, dim, rng);
    p.gate = Linear<T>::create(params, "head.gate", 2 * dim, dim, rng);
    if (options.shared_lmhead) {
        const auto head = Linear<T>::create(params, "head.lmhead", dim, 2, rng);
        p.lmhead = {head, head, head, head};
    } else {
        for (std::size_t k = 0; k < 4; ++k) {
            p.lmhead[k] = Linear<T>::create(params, "head.lmhead_s" + std::to_string(k + 1), dim, 2, rng);
        }
    }
    return p;
}

template <typename T>
Globals<T> extract_globals(const PerceptionParams<T>& p, const EncodedBatch<T>& enc, const RegionSlices<T>& slices,
                           bool demos)
{
    std::vector<std::size_t> infer_len;
    std::vector<std::size_t> neg_len;
    std::vector<std::size_t> pos_len;
    for (const auto& r : enc.real_lengths) {
        infer_len.push_back(r.infer);
        neg_len.push_back(r.neg);
        pos_len.push_back(r.pos);
    }
    Globals<T> t;
    t.infer = lstm_last(slices.infer, p.region_lstm[0], infer_len);
    if (demos) {
        t.neg = lstm_last(slices.neg, p.region_lstm[1], neg_len);
        t.pos = lstm_last(slices.pos, p.region_lstm[2], pos_len);
    }
    return t;
}

template <typename T>
Perception<T> perceive(Graph<T>& g, const PerceptionParams<T>& p, const Globals<T>& t, const Var<T>& special_infer,
                       const Var<T>& special_neg, const Var<T>& special_pos)
{
    const Var<T> query = add(t.infer, special_infer);
    const Var<T> hate_pair = concat_last({query, add(t.neg, special_neg)});
    const Var<T> benign_pair = concat_last({query, add(t.pos, special_pos)});
    Perception<T> out;
    out.i0 = p.hpn_out(g, tanh(p.hpn_hidden(g, hate_pair)));
    out.i1 = p.nhpn_out(g, tanh(p.nhpn_hidden(g, benign_pair)));
    return out;
}

template <typename T>
Var<T> gate_fuse(Graph<T>& g, const PerceptionParams<T>& p, const Var<T>& i0, const Var<T>& i1)
{
    const Var<T> gate = sigmoid(p.gate(g, concat_last({i0, i1})));
    // g * I0 + (1 - g) * I1 == I1 + g * (I0 - I1)
    return add(i1, mul(gate, sub(i0, i1)));
}

template <typename T>
ViewScores<T> multi_view_score(Graph<T>& g, const PerceptionParams<T>& p, const Var<T>& t_infer,
                               const Var<T>& special_infer, const Var<T>& i0, const Var<T>& i1, const Var<T>& i_hat,
                               const ViewSet& views)
{
    if (!views.any()) {
        throw ConfigError("multi_view_score: empty view set");
    }
    const std::array<const Var<T>*, 4> inputs = {&t_infer, &i0, &i1, &i_hat};
    const std::size_t batch = special_infer.shape().at(0);
    ViewScores<T> out;
    Var<T> total;
    for (std::size_t k = 0; k < 4; ++k) {
        if (!views.enabled(k)) {
            out.s[k] = g.constant(Tensor<T>({batch, 2}));
            continue;
        }
        if (!inputs[k]->valid()) {
            throw ConfigError("multi_view_score: view s" + std::to_string(k + 1) + " enabled without its input");
        }
        out.s[k] = p.lmhead[k](g, add(*inputs[k], special_infer));
        total = total.valid() ? add(total, out.s[k]) : out.s[k];
    }
    out.all = total;
    return out;
}

template <typename T>
PerceptionBundle<T> run_head(Graph<T>& g, const PerceptionParams<T>& p, const HeadOptions& options,
                             const EncodedBatch<T>& enc)
{
    options.validate();
    const RegionSlices<T> slices = slice_regions(enc);
    const bool perception = options.pmp_enabled && options.views.needs_perception();
    PerceptionBundle<T> b;
    const Globals<T> t = extract_globals(p, enc, slices, perception);
    b.t_infer = t.infer;
    b.t_neg = t.neg;
    b.t_pos = t.pos;
    b.special_infer = slices.special_infer;
    b.special_neg = slices.special_neg;
    b.special_pos = slices.special_pos;
    if (perception) {
        const auto per = perceive(g, p, t, slices.special_infer, slices.special_neg, slices.special_pos);
        b.i0 = per.i0;
        b.i1 = per.i1;
        if (options.views.enabled(3)) {
            b.i_hat = gate_fuse(g, p, per.i0, per.i1);
        }
    }
    b.scores = multi_view_score(g, p, b.t_infer, b.special_infer, b.i0, b.i1, b.i_hat, options.views);
    return b;
}

Label predict(double score_hateful, double score_non_hateful)
{
    if (!std::isfinite(score_hateful) || !std::isfinite(score_non_hateful)) {
        throw NumericError("predict: non-finite score");
    }
    return score_hateful > score_non_hateful ? Label::Hateful : Label::NonHateful;
}

template <typename T>
std::vector<Label> predict(const Tensor<T>& s_all)
{
    if (s_all.rank() != 2 || s_all.dim(1) != 2) {
        throw ShapeError("predict: expected [batch, 2] scores, got " + to_string(s_all.shape));
    }
    std::vector<Label> out;
    for (std::size_t b = 0; b < s_all.dim(0); ++b) {
        out.push_back(predict(static_cast<double>(s_all[2 * b]), static_cast<double>(s_all[2 * b + 1])));
    }
    return out;
}

#define PEN_INSTANTIATE(T)                                                                                        \
    template struct PerceptionParams<T>;                                                                          \
    template Globals<T> extract_globals(const PerceptionParams<T>&, const EncodedBatch<T>&, const RegionSlices<T>&, \
                                        bool);                                                                    \
    template Perception<T> perceive(Graph<T>&, const PerceptionParams<T>&, const Globals<T>&, const Var<T>&,      \
                                    const Var<T>&, const Var<T>&);                                                \
    template Var<T> gate_fuse(Graph<T>&, const PerceptionParams<T>&, const Var<T>&, const Var<T>&);               \
    template ViewScores<T> multi_view_score(Graph<T>&, const PerceptionParams<T>&, const Var<T>&, const Var<T>&,  \
                                            const Var<T>&, const Var<T>&, const Var<T>&, const ViewSet&);         \
    template PerceptionBundle<T> run_head(Graph<T>&, const PerceptionParams<T>&, const HeadOptions&,              \
                                          const EncodedBatch<T>&);                                                \
    template std::vector<Label> predict(const Tensor<T>&);

PEN_INSTANTIATE(float)
PEN_INSTANTIATE(double)

#undef PEN_INSTANTIATE

}  // namespace pen
