#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stagerm/estimator.hpp" // ParamSlice
#include "stagerm/predictor.hpp"
#include "stagerm/trajectory.hpp"
#include "stagerm/weighting.hpp"

namespace stagerm {

// Behavior cloning over action chunks, optionally weighted by estimated
// progress made over each chunk. The uniform baseline is the same trainer
// with every weight pinned to 1, so comparisons isolate the weighting.

enum class BCMode { uniform, ra_bc };
enum class WeightSource { offline, online };

std::string to_string(BCMode m);
std::string to_string(WeightSource s);

struct BCConfig {
    int feature_dim = 16;
    int action_dim = 4;
    int hidden = 64;

    double learning_rate = 0.05;
    double momentum = 0.0;
    double grad_clip_norm = 10.0;
    int batch_size = 16;
    int epochs = 10;
    uint64_t seed = 0;

    BCMode mode = BCMode::ra_bc;
    WeightSource source = WeightSource::offline;
    // pins every weight to 1 while keeping the weighted code path, which must
    // then match the uniform trainer step for step
    bool force_unit_weights = false;

    WeightConfig weight; // chunk_stride here decides the item slicing

    void validate() const;
};

// Two-layer policy: action = W2 tanh(W1 x + b1) + b2. Parameters live in one
// flat vector with named slices, same conventions as the estimator.
class PolicyModel {
public:
    PolicyModel(int feature_dim, int action_dim, int hidden, uint64_t seed);

    int feature_dim() const { return feature_dim_; }
    int action_dim() const { return action_dim_; }
    int hidden() const { return hidden_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<ParamSlice> slices() const;

    std::vector<double> act(const std::vector<double>& features) const;

private:
    int feature_dim_, action_dim_, hidden_;
    size_t w1_, b1_, w2_, b2_; // offsets
    std::vector<double> params_;
};

// One training item: the chunk of frames [start, start + stride - 1] of one
// demonstration. Complete chunks only (start + stride <= T - 1), aligned with
// the chunk traversal the weighting pass uses, so weights map onto items 1:1.
struct BCItem {
    const Trajectory* trajectory = nullptr;
    int64_t start = 0;
    int64_t stride = 0;
};

std::vector<BCItem> chunk_items(const std::vector<Trajectory>& demos, int64_t stride);

// Weighted imitation loss over items; per item the loss is the mean over its
// frames of the squared action error (summed over action dims). Returns
// sum(w_i * l_i) / (sum(w_i) + eps_div) and accumulates its gradient, with
// the weights held constant.
double bc_batch_gradient(const PolicyModel& policy, const std::vector<BCItem>& items,
                         const std::vector<double>& weights, double eps_div,
                         std::vector<double>& grad);

double bc_batch_loss(const PolicyModel& policy, const std::vector<BCItem>& items,
                     const std::vector<double>& weights, double eps_div);

struct BCEpoch {
    int epoch = 0;
    double loss = 0.0;        // mean weighted batch loss over the epoch
    double weight_mean = 0.0; // over every item visit this epoch
    double frac_zero = 0.0;   // visits with w == 0
    double frac_one = 0.0;    // visits with w == 1
};

struct BCTrainReport {
    std::vector<BCEpoch> epochs;
    RunningStats stats; // progress-delta stats the weights came from
};

// Minibatch SGD over chunk items. Weights come from the configured mode:
// uniform (or force_unit_weights) pins w = 1; offline runs the two-pass
// weighting over the demos up front and looks weights up per item; online
// keeps streaming stats, recomputing the progress delta on every visit and
// weighting against the stats including it. ra_bc requires a predictor.
BCTrainReport train_bc(PolicyModel& policy, const std::vector<Trajectory>& demos,
                       const BCConfig& config, const ProgressPredictor* predictor);

// Mean squared action error per frame over the given trajectories.
double eval_policy(const PolicyModel& policy, const std::vector<Trajectory>& trajectories);

} // namespace stagerm
