#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stagerm/labeling.hpp"
#include "stagerm/rollout_eval.hpp"
#include "stagerm/trajectory.hpp"

namespace stagerm {

// Synthetic manipulation episodes with known stage structure. The simulator
// is the test bed: every trajectory carries its true per-frame stage, within-
// stage fraction, and composed progress, so estimators and weighting schemes
// can be scored against ground truth instead of against themselves.

enum class Quality { expert, stall, misgrasp, regression, premature };

std::string to_string(Quality q);

struct FailureMix {
    double stall = 0.0;
    double misgrasp = 0.0;
    double regression = 0.0;
    double premature = 0.0;

    double expert() const { return 1.0 - stall - misgrasp - regression - premature; }
    void validate() const; // each in [0, 1], sum <= 1
};

struct SimConfig {
    int stage_count = 5;
    int feature_dim = 16; // must leave room for the one-hot block plus 2
    int fps = 30;
    double sigma_obs = 0.05;
    int64_t min_stage_frames = 60;
    int64_t max_stage_frames = 140;
    uint64_t seed = 0;
    std::string task_id = "block-stack";
    std::string scheme_id = "sparse";
    std::string id_prefix = "sim";

    void validate() const;
};

inline constexpr int kSimJointDim = 3;
inline constexpr int kSimActionDim = 4;

// Protocol with generic ordered subtask labels "stage-1" .. "stage-K".
AnnotationProtocol default_protocol(const SimConfig& cfg);

// The demonstrator's policy: a fixed squashed-linear map from observed
// features to actions. Constants are derived from a hard-coded seed, never
// from the dataset seed, so every dataset shares the same map and a policy
// with enough capacity can drive the imitation loss to exactly zero.
struct ActionMap {
    int feature_dim = 0;
    std::vector<double> w; // kSimActionDim x feature_dim, row-major
    std::vector<double> b; // kSimActionDim

    std::vector<double> apply(const std::vector<double>& features) const;
};

ActionMap make_action_map(int feature_dim);

struct SimTrajectory {
    Trajectory trajectory;
    TrajectoryAnnotation annotation;
    Quality quality = Quality::expert;

    // per-frame ground truth; y_true is composed against the priors the
    // trajectory was finalized with
    std::vector<int> stage_true;
    std::vector<double> tau_true;
    std::vector<double> y_true;
    std::vector<uint8_t> corrupted; // frames whose recorded action is negated
};

// Standalone generators finalize against the episode's own stage proportions.
SimTrajectory gen_expert(const SimConfig& cfg, uint64_t index);
SimTrajectory gen_suboptimal(const SimConfig& cfg, uint64_t index, Quality quality);

struct SimDataset {
    std::vector<SimTrajectory> items;
    AnnotationProtocol protocol;
    PriorProfile priors; // over the annotations that pass the filter
    FilterReport filter;
};

// Draws a quality per index from the mix, drafts every episode, filters the
// annotations, computes dataset priors over the kept ones, and only then
// emits frames, so ground-truth progress and the labeler's output coincide
// exactly on expert episodes. threads > 1 parallelizes frame emission across
// episodes; the output is byte-identical either way.
SimDataset gen_dataset(const SimConfig& cfg, int64_t count, const FailureMix& mix,
                       int threads = 1);

struct SimRolloutSet {
    std::vector<SimTrajectory> items;
    std::vector<RolloutClass> truth;
};

// True-progress traces with the truth class attached, ready for scoring.
std::vector<RolloutTrace> truth_traces(const SimRolloutSet& set);

// Builds n_se successes (full completion plus a terminal dwell), n_pse partial
// successes (stall at a plateau in [0.45, 0.65]) and n_fe failures (stall
// below 0.2). The set is verified before it is returned: the success rule must
// fire exactly on the successes, every partial-success trace mean must exceed
// every failure trace mean, and for balanced sets the full classifier must
// reproduce the construction classes. Violations trigger fresh draws; running
// out of retries is an error naming the seed.
SimRolloutSet gen_rollout_set(const SimConfig& cfg, int n_se, int n_pse, int n_fe);

} // namespace stagerm
