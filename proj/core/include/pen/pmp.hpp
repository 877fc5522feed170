#pragma once

// Prompt-enhanced multi-view perception head.
//
//   t_*        LSTM summaries of the three content regions (prompt spans excluded)
//   I0         HPN((t_infer + m) ++ (t_neg + bad))
//   I1         NHPN((t_infer + m) ++ (t_pos + good))
//   I_hat      g * I0 + (1 - g) * I1,  g = sigmoid(W_g (I0 ++ I1) + b_g)
//   s1..s4     LMhead(t_infer + m), LMhead(I0 + m), LMhead(I1 + m), LMhead(I_hat + m)
//   S_all      sum of the enabled views
//
// m, bad and good are the encoder rows at the mask and label-word positions.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "pen/encoder.hpp"
#include "pen/layers.hpp"

namespace pen {

/// Subset of {s1, s2, s3, s4}.
class ViewSet {
public:
    ViewSet() = default;
    static ViewSet all() { return ViewSet({true, true, true, true}); }
    static ViewSet only_s1() { return ViewSet({true, false, false, false}); }
    /// Names "s1".."s4"; throws ConfigError on unknown names.
    static ViewSet parse(const std::vector<std::string>& names);
    /// Bits 0..3 select s1..s4.
    static ViewSet from_mask(unsigned mask);

    bool enabled(std::size_t view) const { return on_.at(view); }
    bool any() const { return on_[0] || on_[1] || on_[2] || on_[3]; }
    // s2, s3 or s4 need the perception networks.
    bool needs_perception() const { return on_[1] || on_[2] || on_[3]; }
    std::vector<std::string> names() const;
    bool operator==(const ViewSet&) const = default;

private:
    explicit ViewSet(std::array<bool, 4> on) : on_(on) {}
    std::array<bool, 4> on_{};
};

struct HeadOptions {
    ViewSet views = ViewSet::all();
    // false reproduces "w/o PMP": HPN, NHPN and GATE stay out of the graph.
    bool pmp_enabled = true;
    bool tie_region_lstm = true;
    bool shared_lmhead = true;

    void validate() const;
};

template <typename T>
struct PerceptionParams {
    std::array<LstmParams<T>, 3> region_lstm;  // infer, neg, pos (identical when tied)
    Linear<T> hpn_hidden;
    Linear<T> hpn_out;
    Linear<T> nhpn_hidden;
    Linear<T> nhpn_out;
    Linear<T> gate;
    std::array<Linear<T>, 4> lmhead;  // per view (identical when shared)

    /// Registers "head.*" parameters.
    static PerceptionParams create(ParameterSet<T>& params, std::size_t dim, const HeadOptions& options,
                                   std::mt19937_64& rng);
};

template <typename T>
struct Globals {
    Var<T> infer;
    Var<T> neg;
    Var<T> pos;
};

template <typename T>
struct Perception {
    Var<T> i0;
    Var<T> i1;
};

template <typename T>
struct ViewScores {
    std::array<Var<T>, 4> s;  // disabled views hold zero tuples
    Var<T> all;
};

/// Everything the head computes for one batch. Unused intermediates stay
/// invalid (e.g. I0 when PMP is disabled).
template <typename T>
struct PerceptionBundle {
    Var<T> t_infer;
    Var<T> t_neg;
    Var<T> t_pos;
    Var<T> special_infer;
    Var<T> special_neg;
    Var<T> special_pos;
    Var<T> i0;
    Var<T> i1;
    Var<T> i_hat;
    ViewScores<T> scores;
};

/// LSTM summaries of the content regions up to their real lengths.
/// With `demos` false only t_infer is computed.
template <typename T>
Globals<T> extract_globals(const PerceptionParams<T>& p, const EncodedBatch<T>& enc, const RegionSlices<T>& slices,
                           bool demos = true);

template <typename T>
Perception<T> perceive(Graph<T>& g, const PerceptionParams<T>& p, const Globals<T>& t, const Var<T>& special_infer,
                       const Var<T>& special_neg, const Var<T>& special_pos);

template <typename T>
Var<T> gate_fuse(Graph<T>& g, const PerceptionParams<T>& p, const Var<T>& i0, const Var<T>& i1);

/// Throws ConfigError for an empty view set or when an enabled view's input
/// is missing.
template <typename T>
ViewScores<T> multi_view_score(Graph<T>& g, const PerceptionParams<T>& p, const Var<T>& t_infer,
                               const Var<T>& special_infer, const Var<T>& i0, const Var<T>& i1, const Var<T>& i_hat,
                               const ViewSet& views);

template <typename T>
PerceptionBundle<T> run_head(Graph<T>& g, const PerceptionParams<T>& p, const HeadOptions& options,
                             const EncodedBatch<T>& enc);

/// argmax over (score_hateful, score_non_hateful); an exact tie is NonHateful.
/// Throws NumericError on non-finite scores.
Label predict(double score_hateful, double score_non_hateful);
template <typename T>
std::vector<Label> predict(const Tensor<T>& s_all);

}  // namespace pen
