#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stagerm/labeling.hpp"
#include "stagerm/predictor.hpp"
#include "stagerm/sampler.hpp"
#include "stagerm/trajectory.hpp"

namespace stagerm {

struct EstimatorConfig {
    int stage_count = 5; // K
    int feature_dim = 16;
    int joint_dim = 0;   // 0 disables the joint-state input
    int d_model = 32;
    int head_hidden = 64;

    double learning_rate = 1e-2;
    double momentum = 0.0;
    double grad_clip_norm = 10.0;
    double mse_weight = 1.0; // lambda on the within-stage regression term
    int batch_size = 32;
    int epochs = 20;
    uint64_t seed = 0;
    std::string scheme_id = "sparse";

    // window geometry the model was trained with; the trajectory predictor
    // rebuilds windows from these
    int window_length = 9;
    int window_gap = 30;

    int input_dim() const { return feature_dim + joint_dim; }
    void validate() const;
};

struct ObservationWindow {
    std::vector<std::vector<double>> features; // N x feature_dim
    std::vector<std::vector<double>> joints;   // N x joint_dim, or empty
};

ObservationWindow window_from_sample(const SequenceSample& sample);

struct ForwardResult {
    std::vector<std::vector<double>> stage_logits; // N x K
    std::vector<std::vector<double>> stage_probs;  // N x K, rows sum to 1
    std::vector<int> stage_pred;                   // 1-based argmax per position
    std::vector<double> tau_hat;                   // in (0, 1), logistic squash
    std::vector<double> y_hat;                     // composed progress in [0, 1]
};

struct ParamSlice {
    std::string name;
    size_t offset = 0;
    size_t rows = 0;
    size_t cols = 0;
    size_t size() const { return rows * cols; }
};

// Stage/progress estimator.
//
// Trunk: each frame is linearly projected to d_model; position 0 additionally
// receives a learned bias, which is the only thing distinguishing the episode
// start from the tail. The context vector is the mean of the projections. The
// per-position head input is [projection | context | projection of position 0].
//
// Heads (one pair per annotation scheme, trunk shared): a stage head mapping
// the head input through a tanh hidden layer to K logits, and a subtask head
// that additionally sees the stage distribution (soft, so training stays
// differentiable) and emits a scalar squashed to tau in (0, 1). The composed
// estimate uses the hard argmax stage: y = P_{S-1} + alpha_S * tau.
//
// Parameters live in one flat vector with named slices, which keeps SGD,
// finite differencing, and checkpointing trivial.
class EstimatorModel {
public:
    EstimatorModel(const EstimatorConfig& config, const PriorProfile& priors);

    const EstimatorConfig& config() const { return config_; }

    void add_scheme(const std::string& scheme_id, const PriorProfile& priors);
    bool has_scheme(const std::string& scheme_id) const;
    const PriorProfile& priors(const std::string& scheme_id) const;
    const std::vector<std::string>& scheme_order() const { return scheme_order_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<ParamSlice> slices() const;

    ForwardResult forward(const ObservationWindow& window, const std::string& scheme_id) const;

    struct LossBreakdown {
        double total = 0.0;
        double stage_ce = 0.0;
        double subtask_mse = 0.0;
    };

    // CE + lambda * MSE from already-computed outputs; pure in its inputs.
    LossBreakdown loss(const ForwardResult& outputs, const SequenceSample& targets) const;

    // Mean loss over the batch and its gradient w.r.t. every parameter.
    LossBreakdown batch_gradient(const std::vector<const SequenceSample*>& batch,
                                 const std::string& scheme_id,
                                 std::vector<double>& grad) const;

    double batch_loss(const std::vector<const SequenceSample*>& batch,
                      const std::string& scheme_id) const;

private:
    struct MatRef {
        size_t offset = 0, rows = 0, cols = 0;
    };
    struct Trunk {
        MatRef proj_w, proj_b, pos0_b;
    };
    struct SchemeHead {
        PriorProfile priors;
        MatRef stage_w1, stage_b1, stage_w2, stage_b2;
        MatRef sub_w1, sub_b1, sub_w2, sub_b2;
    };

    MatRef allocate(size_t rows, size_t cols);
    void init_uniform(const MatRef& m, double bound, Rng& rng);
    const SchemeHead& head(const std::string& scheme_id) const;
    const double* data(const MatRef& m) const { return params_.data() + m.offset; }

    struct Cache; // forward intermediates for backprop, defined in the .cpp
    void forward_cached(const ObservationWindow& window, const SchemeHead& head,
                        Cache& cache) const;

    EstimatorConfig config_;
    std::vector<double> params_;
    Trunk trunk_;
    std::map<std::string, SchemeHead> schemes_;
    std::vector<std::string> scheme_order_;
};

struct TrainEpoch {
    int epoch = 0;
    double stage_ce = 0.0;
    double subtask_mse = 0.0;
    double val_mse = 0.0; // NaN when no validation samples were given
};

struct TrainReport {
    std::vector<TrainEpoch> epochs;
};

// Minibatch SGD (optional momentum) with global-norm gradient clipping.
// Batch order is drawn from a stream seeded by config.seed, so a run is fully
// reproducible. A non-finite loss or gradient aborts with diagnostics rather
// than training through garbage. Architecture fields of `config` must match
// the model's.
TrainReport train(EstimatorModel& model,
                  const std::vector<SequenceSample>& train_samples,
                  const std::vector<SequenceSample>& val_samples,
                  const EstimatorConfig& config);

// Mean squared error of the composed estimate over a sample set.
double one_step_mse(const EstimatorModel& model, const std::string& scheme_id,
                    const std::vector<SequenceSample>& samples);

struct GradientCheckEntry {
    size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradientCheckReport {
    double max_rel_error = 0.0;
    size_t checked = 0;
    GradientCheckEntry worst;
};

// Central-difference check of the analytic gradient on `n_checks` sampled
// parameters (all of them when n_checks covers the model).
GradientCheckReport gradient_check(EstimatorModel& model, const std::string& scheme_id,
                                   const std::vector<SequenceSample>& batch, double h,
                                   size_t n_checks, uint64_t seed);

// Slides the model over a trajectory: the estimate at frame t comes from the
// window whose tail ends at t (gap G, position 0 pinned to frame 0). Tail
// indices before the episode start clamp to frame 0.
class EstimatorPredictor : public ProgressPredictor {
public:
    EstimatorPredictor(const EstimatorModel& model, std::string scheme_id);

    std::string id() const override { return "estimator/" + scheme_; }
    std::vector<double> predict(const Trajectory& trajectory) const override;
    double predict_at(const Trajectory& trajectory, int64_t t) const override;

private:
    ObservationWindow window_ending_at(const Trajectory& trajectory, int64_t t) const;

    const EstimatorModel& model_;
    std::string scheme_;
};

} // namespace stagerm
