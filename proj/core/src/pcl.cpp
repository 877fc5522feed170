#include "pen/pcl.hpp"

#include <cmath>

namespace pen {

void LossConfig::validate() const
{
    if (!(tau1 > 0.0) || !(tau2 > 0.0) || !std::isfinite(tau1) || !std::isfinite(tau2)) {
        throw ConfigError("loss: temperatures must be finite and positive");
    }
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw ConfigError("loss: alpha and beta must be finite and non-negative");
    }
}

template <typename T>
LossReport LossTerms<T>::report() const
{
    return {static_cast<double>(ce.value().item()), static_cast<double>(l1.value().item()),
            static_cast<double>(l2.value().item()), static_cast<double>(total.value().item())};
}

namespace {

void check_batch(const char* op, const Shape& s, std::size_t labels, std::size_t min_rows)
{
    if (s.size() != 2 || s[0] != labels) {
        throw ShapeError(std::string(op) + ": features " + to_string(s) + " do not match " +
                         std::to_string(labels) + " labels");
    }
    if (s[0] < min_rows) {
        throw ShapeError(std::string(op) + ": needs at least " + std::to_string(min_rows) + " samples, got " +
                         std::to_string(s[0]));
    }
}

// Per-row -log(sum(positive * w) / sum(w)) with w = exp(sim / tau) or
// (1 + sim) / 2, averaged over rows. sims [M, K], positive [M, K] of 0/1.
template <typename T>
Var<T> contrastive_from_similarity(const Var<T>& sims, const Tensor<T>& positive, double tau, ContrastiveForm form)
{
    Graph<T>& g = sims.graph();
    Var<T> w = form == ContrastiveForm::InfoNce ? exp(scale(sims, static_cast<T>(1.0 / tau)))
                                                : scale(add_scalar(sims, T{1}), T{0.5});
    const Var<T> all = log(sum_last(w));
    const Var<T> pos = log(sum_last(mul(w, g.constant(positive))));
    return mean(sub(all, pos));
}

}  // namespace

template <typename T>
Var<T> cross_entropy(const Var<T>& s_all, std::span<const Label> labels, std::optional<std::array<double, 2>> class_weights)
{
    check_batch("cross_entropy", s_all.shape(), labels.size(), 1);
    if (s_all.shape()[1] != 2) {
        throw ShapeError("cross_entropy: expected [batch, 2] scores, got " + to_string(s_all.shape()));
    }
    Graph<T>& g = s_all.graph();
    const std::size_t m = labels.size();
    Tensor<T> pick({m, 2});
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double w = class_weights ? (*class_weights)[label_index(labels[i])] : 1.0;
        pick[2 * i + label_index(labels[i])] = static_cast<T>(w);
        norm += w;
    }
    if (!(norm > 0.0)) {
        throw ConfigError("cross_entropy: class weights sum to zero");
    }
    return scale(sum(mul(log_softmax(s_all), g.constant(std::move(pick)))), static_cast<T>(-1.0 / norm));
}

template <typename T>
Var<T> l1_category_contrastive(const Var<T>& masks, std::span<const Label> labels, double tau, ContrastiveForm form)
{
    check_batch("l1_category_contrastive", masks.shape(), labels.size(), 2);
    const std::size_t m = labels.size();
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    Tensor<T> positive({m, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            left.push_back(i);
            right.push_back(j);
            positive[i * m + j] = labels[i] == labels[j] ? T{1} : T{0};
        }
    }
    const Var<T> sims = reshape(cosine_similarity(gather_rows(masks, left), gather_rows(masks, right)), {m, m});
    return contrastive_from_similarity(sims, positive, tau, form);
}

template <typename T>
Var<T> l2_prompt_contrastive(const Var<T>& masks, const Var<T>& special_neg, const Var<T>& special_pos,
                             std::span<const Label> labels, double tau, ContrastiveForm form, bool stop_grad)
{
    check_batch("l2_prompt_contrastive", masks.shape(), labels.size(), 1);
    if (special_neg.shape() != masks.shape() || special_pos.shape() != masks.shape()) {
        throw ShapeError("l2_prompt_contrastive: label-word features " + to_string(special_neg.shape()) + " / " +
                         to_string(special_pos.shape()) + " do not match masks " + to_string(masks.shape()));
    }
    const std::size_t m = labels.size();
    const Var<T> neg = stop_grad ? detach(special_neg) : special_neg;
    const Var<T> pos = stop_grad ? detach(special_pos) : special_pos;
    const Var<T> sim_neg = reshape(cosine_similarity(masks, neg), {m, 1});
    const Var<T> sim_pos = reshape(cosine_similarity(masks, pos), {m, 1});
    const Var<T> sims = concat_last({sim_neg, sim_pos});
    Tensor<T> positive({m, 2});
    for (std::size_t i = 0; i < m; ++i) {
        // Column 0 is the hateful demonstration's label word.
        positive[2 * i + (labels[i] == Label::Hateful ? 0 : 1)] = T{1};
    }
    return contrastive_from_similarity(sims, positive, tau, form);
}

template <typename T>
LossTerms<T> total_loss(const Var<T>& ce, const Var<T>& l1, const Var<T>& l2, const LossConfig& cfg)
{
    cfg.validate();
    LossTerms<T> t{ce, l1, l2, {}};
    t.total = add(add(ce, scale(l1, static_cast<T>(cfg.alpha))), scale(l2, static_cast<T>(cfg.beta)));
    return t;
}

#define PEN_INSTANTIATE(T)                                                                                    \
    template struct LossTerms<T>;                                                                             \
    template Var<T> cross_entropy(const Var<T>&, std::span<const Label>, std::optional<std::array<double, 2>>); \
    template Var<T> l1_category_contrastive(const Var<T>&, std::span<const Label>, double, ContrastiveForm);   \
    template Var<T> l2_prompt_contrastive(const Var<T>&, const Var<T>&, const Var<T>&, std::span<const Label>, \
                                          double, ContrastiveForm, bool);                                     \
    template LossTerms<T> total_loss(const Var<T>&, const Var<T>&, const Var<T>&, const LossConfig&);

PEN_INSTANTIATE(float)
PEN_INSTANTIATE(double)

#undef PEN_INSTANTIATE

}  // namespace pen
