#pragma once

// Reference implementations written as plain loops over std::vector<double>,
// sharing no numeric code with pen_core. Used by the unit tests, the
// acceptance suite and `pen oracle-check`.

#include <cstdint>
#include <string>
#include <vector>

#include "pen/assembler.hpp"
#include "pen/corpus.hpp"

namespace pen::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

/// Offsets from the closed-form block arithmetic of the layout.
LayoutOffsets layout(const RegionLayout& l);

double cosine(const Vec& a, const Vec& b);

/// mean_i -log softmax(s_i)[y_i]
double cross_entropy(const Mat& scores, const std::vector<Label>& labels);

/// Category-oriented contrastive loss, double loop over the batch.
double l1(const Mat& masks, const std::vector<Label>& labels, double tau, bool literal_ratio = false);

/// Prompt-oriented contrastive loss over each sample's own label words.
double l2(const Mat& masks, const Mat& neg, const Mat& pos, const std::vector<Label>& labels, double tau,
          bool literal_ratio = false);

/// Weights laid out as in LstmParams: w_input [d][4h], w_hidden [h][4h],
/// bias [4h], gates (i, f, g, o).
struct LstmWeights {
    Mat w_input;
    Mat w_hidden;
    Vec bias;
};

/// x[b][t] is the input vector at step t. Returns the hidden state per
/// step, [b][t] (zero beyond the real length), running backwards over the
/// first lengths[b] steps when `reverse`.
std::vector<Mat> lstm(const std::vector<Mat>& x, const LstmWeights& w, const std::vector<std::size_t>& lengths,
                      bool reverse);
/// Final hidden state per sample (zero for length 0).
Mat lstm_last(const std::vector<Mat>& x, const LstmWeights& w, const std::vector<std::size_t>& lengths);

struct CheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

// Relative error |a - n| / max(|a|, |n|, kGradFloor) for gradient checks.
inline constexpr double kGradFloor = 1e-6;
inline constexpr double kFdStep = 1e-5;

/// Full-model analytic gradients (ce + alpha L1 + beta L2, 64-bit) against
/// central differences on `samples` randomly chosen parameter entries.
CheckResult check_gradients(std::uint64_t seed, std::size_t samples = 1000);
/// Vectorised L1 / L2 / CE against the loops above on random batches
/// (M <= 32, d <= 64), both formulations.
CheckResult check_losses(std::uint64_t seed, std::size_t batches = 100);
/// Fused LSTM (last state and both sequence directions) against the scalar
/// recurrence.
CheckResult check_lstm(std::uint64_t seed, std::size_t trials = 20);
/// Assembled sequences against the closed-form layout on random records
/// and layouts.
CheckResult check_layout(std::uint64_t seed, std::size_t records = 1000);

std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace pen::oracle
