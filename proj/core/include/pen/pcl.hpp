#pragma once

// Training objective: cross-entropy on S_all plus two contrastive terms over
// the mask-token features m_i = t_special_infer[i].
//
// L1 (category-oriented), InfoNCE form:
//   l_i = -log( sum_{j: y_j = y_i} exp(cos(m_i, m_j)/tau1) / sum_k exp(cos(m_i, m_k)/tau1) )
//   j and k run over the whole batch, the self pair included.
// L2 (prompt-oriented), InfoNCE form over the sample's own two label-word
//   features {bad_i, good_i}; the positive is bad_i for hateful samples.
// LiteralRatio replaces exp(cos/tau) with (1 + cos)/2, the temperature then
// cancelling from the ratio.
//
// total = ce + alpha * L1 + beta * L2

#include <array>
#include <optional>
#include <span>

#include "pen/autograd.hpp"
#include "pen/corpus.hpp"

namespace pen {

enum class ContrastiveForm { InfoNce, LiteralRatio };

struct LossConfig {
    double alpha = 0.1;
    double beta = 0.1;
    double tau1 = 0.3;
    double tau2 = 0.3;
    ContrastiveForm form = ContrastiveForm::InfoNce;
    // Stops L2 gradients from reaching the label-word features.
    bool l2_stop_grad = false;

    void validate() const;
};

struct LossReport {
    double ce = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double total = 0.0;
};

template <typename T>
struct LossTerms {
    Var<T> ce;
    Var<T> l1;
    Var<T> l2;
    Var<T> total;

    LossReport report() const;
};

/// Mean of -log softmax(S_all)[gold]. With class weights, a weighted mean.
template <typename T>
Var<T> cross_entropy(const Var<T>& s_all, std::span<const Label> labels,
                     std::optional<std::array<double, 2>> class_weights = std::nullopt);

/// masks [M, d], M >= 2 (ShapeError otherwise).
template <typename T>
Var<T> l1_category_contrastive(const Var<T>& masks, std::span<const Label> labels, double tau,
                               ContrastiveForm form = ContrastiveForm::InfoNce);

/// masks, special_neg, special_pos [M, d], M >= 1.
template <typename T>
Var<T> l2_prompt_contrastive(const Var<T>& masks, const Var<T>& special_neg, const Var<T>& special_pos,
                             std::span<const Label> labels, double tau,
                             ContrastiveForm form = ContrastiveForm::InfoNce, bool stop_grad = false);

template <typename T>
LossTerms<T> total_loss(const Var<T>& ce, const Var<T>& l1, const Var<T>& l2, const LossConfig& cfg);

}  // namespace pen
