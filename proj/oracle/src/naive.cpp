#include <cmath>
#include <stdexcept>

#include "pen_oracle/oracle.hpp"

namespace pen::oracle {

LayoutOffsets layout(const RegionLayout& l)
{
    const std::size_t li = l.len_infer;
    const std::size_t ld = l.len_demo;
    const std::size_t lp = l.len_prompt;
    const std::size_t head = 1 + li + lp + 1;  // [start] infer prompt [sep]
    const std::size_t block = ld + lp + 1;     // demo prompt [sep]

    LayoutOffsets o;
    o.total = head + 2 * block;
    o.start = 0;
    o.infer = {1, 1 + li};
    o.infer_prompt = {1 + li, 1 + li + lp};
    o.sep_infer = head - 1;
    const std::size_t neg_block = l.hateful_first ? head : head + block;
    const std::size_t pos_block = l.hateful_first ? head + block : head;
    o.neg = {neg_block, neg_block + ld};
    o.neg_prompt = {neg_block + ld, neg_block + ld + lp};
    o.sep_neg = neg_block + block - 1;
    o.pos = {pos_block, pos_block + ld};
    o.pos_prompt = {pos_block + ld, pos_block + ld + lp};
    o.sep_pos = pos_block + block - 1;
    o.mask = 1 + li + lp - 1;
    o.neg_label = neg_block + ld + lp - 1;
    o.pos_label = pos_block + ld + lp - 1;
    return o;
}

double cosine(const Vec& a, const Vec& b)
{
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    const double den = std::sqrt(na) * std::sqrt(nb);
    return dot / (den > 1e-6 ? den : 1e-6);
}

double cross_entropy(const Mat& scores, const std::vector<Label>& labels)
{
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double a = scores[i][0];
        const double b = scores[i][1];
        const double hi = a > b ? a : b;
        const double lse = hi + std::log(std::exp(a - hi) + std::exp(b - hi));
        const double gold = labels[i] == Label::Hateful ? a : b;
        total += lse - gold;
    }
    return total / static_cast<double>(scores.size());
}

namespace {

double weight(double sim, double tau, bool literal)
{
    return literal ? (1.0 + sim) / 2.0 : std::exp(sim / tau);
}

}  // namespace

double l1(const Mat& masks, const std::vector<Label>& labels, double tau, bool literal_ratio)
{
    const std::size_t m = masks.size();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double w = weight(cosine(masks[i], masks[j]), tau, literal_ratio);
            den += w;
            if (labels[j] == labels[i]) {
                num += w;
            }
        }
        total += -std::log(num / den);
    }
    return total / static_cast<double>(m);
}

double l2(const Mat& masks, const Mat& neg, const Mat& pos, const std::vector<Label>& labels, double tau,
          bool literal_ratio)
{
    double total = 0.0;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const double w_neg = weight(cosine(masks[i], neg[i]), tau, literal_ratio);
        const double w_pos = weight(cosine(masks[i], pos[i]), tau, literal_ratio);
        const double hit = labels[i] == Label::Hateful ? w_neg : w_pos;
        total += -std::log(hit / (w_neg + w_pos));
    }
    return total / static_cast<double>(masks.size());
}

namespace {

double sigmoid(double v)
{
    return 1.0 / (1.0 + std::exp(-v));
}

}  // namespace

std::vector<Mat> lstm(const std::vector<Mat>& x, const LstmWeights& w, const std::vector<std::size_t>& lengths,
                      bool reverse)
{
    const std::size_t h = w.w_hidden.size();
    std::vector<Mat> out;
    for (std::size_t b = 0; b < x.size(); ++b) {
        const std::size_t steps = x[b].size();
        Mat seq(steps, Vec(h, 0.0));
        Vec hs(h, 0.0);
        Vec cs(h, 0.0);
        for (std::size_t s = 0; s < lengths[b]; ++s) {
            const std::size_t t = reverse ? lengths[b] - 1 - s : s;
            Vec z(4 * h, 0.0);
            for (std::size_t g = 0; g < 4 * h; ++g) {
                double acc = w.bias[g];
                for (std::size_t k = 0; k < x[b][t].size(); ++k) {
                    acc += x[b][t][k] * w.w_input[k][g];
                }
                for (std::size_t k = 0; k < h; ++k) {
                    acc += hs[k] * w.w_hidden[k][g];
                }
                z[g] = acc;
            }
            Vec next_h(h);
            for (std::size_t k = 0; k < h; ++k) {
                const double ig = sigmoid(z[k]);
                const double fg = sigmoid(z[h + k]);
                const double cg = std::tanh(z[2 * h + k]);
                const double og = sigmoid(z[3 * h + k]);
                cs[k] = fg * cs[k] + ig * cg;
                next_h[k] = og * std::tanh(cs[k]);
            }
            hs = next_h;
            seq[t] = hs;
        }
        out.push_back(std::move(seq));
    }
    return out;
}

Mat lstm_last(const std::vector<Mat>& x, const LstmWeights& w, const std::vector<std::size_t>& lengths)
{
    const auto seqs = lstm(x, w, lengths, false);
    const std::size_t h = w.w_hidden.size();
    Mat out;
    for (std::size_t b = 0; b < x.size(); ++b) {
        out.push_back(lengths[b] == 0 ? Vec(h, 0.0) : seqs[b][lengths[b] - 1]);
    }
    return out;
}

}  // namespace pen::oracle
